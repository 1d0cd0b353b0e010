import numpy as np
import pytest

from kitecycle.collocate import Mesh, transcribe
from kitecycle.guess import GuessRecipe, perturb, synth_guess
from kitecycle.kite import SystemParams
from kitecycle.ocp import ConfigurationError, OcpOptions, build_ocp, scale


@pytest.fixture(scope="module")
def nlp():
    # problem built at the same reference wind the guesses are asked for
    params = SystemParams().replace(wind=SystemParams().wind.replace_ref(8.0))
    prob, _ = scale(build_ocp(params))
    return transcribe(prob, Mesh(30))


class TestSynthGuess:
    def test_exact_periodicity(self, nlp):
        for w in (4.0, 8.0, 13.5, 20.0):
            z0 = synth_guess(nlp, w)
            _, c_eq, _ = nlp.eval(z0)
            assert np.abs(c_eq[nlp.m_defect:]).max() == 0.0

    def test_bound_feasible_across_wind_range(self, nlp):
        for w in np.arange(4.0, 20.5, 1.0):
            z0 = synth_guess(nlp, w)
            assert np.all(z0 >= nlp.lb - 1e-12)
            assert np.all(z0 <= nlp.ub + 1e-12)

    def test_reel_sign_structure(self, nlp):
        z0 = synth_guess(nlp, 8.0)
        _, us, _, _ = nlp.layout.split(z0)
        v = us[:, 1] * nlp.problem.scaling.u[1]
        assert v.max() > 0.5 and v.min() < -0.5
        # single contiguous retraction segment (wrapping across the seam)
        neg = v < 0.0
        switches = int(np.sum(neg[1:] != neg[:-1]))
        assert switches <= 2

    def test_cycle_time_map_decreases_with_wind(self, nlp):
        recipe = GuessRecipe()
        t8 = recipe.cycle_time_for(8.0, (40.0, 400.0))
        t16 = recipe.cycle_time_for(16.0, (40.0, 400.0))
        assert t8 == pytest.approx(220.0)
        assert t16 == pytest.approx(140.0)
        assert t16 < t8

    def test_guessed_duration_enters_vector(self, nlp):
        z8 = synth_guess(nlp, 8.0)
        z16 = synth_guess(nlp, 16.0)
        sc_t = nlp.problem.scaling.t
        t8 = z8[nlp.layout.t_index] * sc_t
        t16 = z16[nlp.layout.t_index] * sc_t
        assert t16 < t8

    def test_more_eights_at_low_wind(self):
        recipe = GuessRecipe()
        assert recipe.eights_for(6.0) > recipe.eights_for(16.0)
        assert recipe.eights_for(20.0) >= 2

    def test_amplitudes_must_fit_boxes(self):
        prob, _ = scale(build_ocp(SystemParams(),
                                  OcpOptions(azimuth_box=(-0.3, 0.3))))
        small = transcribe(prob, Mesh(20))
        with pytest.raises(ConfigurationError, match="azimuth"):
            synth_guess(small, 8.0)  # default phi amplitude exceeds the box

    def test_force_target_respected(self, nlp):
        from kitecycle.collocate import residual_report
        z0 = synth_guess(nlp, 8.0)
        rep = residual_report(nlp, z0)
        assert rep["force_hi"] == 0.0
        assert rep["power_cap"] == 0.0
        assert rep["bounds"] == 0.0


class TestPerturb:
    def test_zero_magnitude_identity(self, nlp):
        z0 = synth_guess(nlp, 8.0)
        z1 = perturb(nlp, z0, seed=3, magnitude=0.0)
        assert np.array_equal(z0, z1)

    def test_same_seed_identical(self, nlp):
        z0 = synth_guess(nlp, 8.0)
        a = perturb(nlp, z0, seed=11, magnitude=0.05)
        b = perturb(nlp, z0, seed=11, magnitude=0.05)
        assert np.array_equal(a, b)

    def test_distinct_seeds_differ(self, nlp):
        z0 = synth_guess(nlp, 8.0)
        a = perturb(nlp, z0, seed=1, magnitude=0.05)
        b = perturb(nlp, z0, seed=2, magnitude=0.05)
        lay = nlp.layout
        u_a = a[lay.u_offset: lay.u_offset + lay.n_nodes * lay.n_u]
        u_b = b[lay.u_offset: lay.u_offset + lay.n_nodes * lay.n_u]
        assert np.abs(u_a - u_b).max() >= 1e-6

    def test_perturbed_guess_stays_periodic_and_bounded(self, nlp):
        z0 = synth_guess(nlp, 8.0)
        z1 = perturb(nlp, z0, seed=5, magnitude=0.1)
        _, c_eq, _ = nlp.eval(z1)
        assert np.abs(c_eq[nlp.m_defect:]).max() < 1e-10
        assert np.all(z1 >= nlp.lb - 1e-12)
        assert np.all(z1 <= nlp.ub + 1e-12)

    def test_magnitude_range_enforced(self, nlp):
        z0 = synth_guess(nlp, 8.0)
        with pytest.raises(ValueError):
            perturb(nlp, z0, seed=1, magnitude=0.5)
