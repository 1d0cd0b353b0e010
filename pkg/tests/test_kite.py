import numpy as np
import pytest

from kitecycle.atmosphere import WindProfile
from kitecycle.kite import (KiteControl, KiteState, SystemParams, cycle_energy,
                            dynamics_rhs, flow_quantities, flow_state,
                            phase_labels)


def uniform_params(w=10.0):
    p = SystemParams()
    return p.replace(wind=WindProfile(w_ref=w, h_ref=100.0, shear_exp=0.0))


class TestFlowState:
    def test_zenith_kills_alignment(self):
        p = uniform_params()
        fs = flow_state(p, KiteState(300.0, np.pi / 2 - 1e-12, 0.7, 0.0, 1.0),
                        KiteControl(0.0, 0.0, 0.0))
        assert fs.cos_align == pytest.approx(0.0, abs=1e-9)
        assert fs.wind_eff == pytest.approx(0.0, abs=1e-8)
        assert fs.force == pytest.approx(0.0, abs=1e-6)
        assert fs.p_mech == pytest.approx(0.0, abs=1e-6)

    def test_depowered_force_at_two_mps_effective(self):
        # oracle: 0.5*1.225*120*c_R(0)*(1+E(0)^2)*2^2 evaluated in closed form
        p = uniform_params(w=2.0)
        fs = flow_state(p, KiteState(300.0, np.pi / 2 - 1e-14, 0.0, 0.0, 0.0),
                        KiteControl(0.0, -2.0, 0.0))  # w_e = 0 + 2
        assert fs.wind_eff == pytest.approx(2.0, rel=1e-9)
        assert fs.force == pytest.approx(3984.2840143922217, rel=1e-6)

    def test_loyd_point_force_and_power(self):
        # oracle: closed-form force at w=10, full trim, reel factor 1/3;
        # demonstrates why the force cap must bind as a constraint
        p = uniform_params(w=10.0)
        x = KiteState(300.0, 1e-9, 0.0, 0.0, 1.0)  # downwind, cos align -> 1
        fs = flow_state(p, x, KiteControl(0.0, 10.0 / 3.0, 0.0))
        assert fs.wind_eff == pytest.approx(20.0 / 3.0, rel=1e-9)
        assert fs.force == pytest.approx(331578.8963261819, rel=1e-9)
        assert fs.p_mech == pytest.approx(1105262.9877539396, rel=1e-9)

    def test_efficiency_split_signs(self):
        p = uniform_params()
        x = KiteState(300.0, 0.5, 0.0, 0.0, 1.0)
        gen = flow_state(p, x, KiteControl(0.0, 2.0, 0.0))
        mot = flow_state(p, x, KiteControl(0.0, -2.0, 0.0))
        assert gen.p_elec == pytest.approx(0.9 * gen.p_mech, rel=1e-6)
        assert mot.p_elec == pytest.approx(mot.p_mech / 0.9, rel=1e-6)
        assert gen.p_mech > 0.0 > mot.p_mech

    def test_force_nonnegative(self):
        p = SystemParams()
        rng = np.random.default_rng(0)
        r = rng.uniform(200, 600, 100)
        beta = rng.uniform(0.2, 1.3, 100)
        phi = rng.uniform(-1.0, 1.0, 100)
        alpha = rng.uniform(0, 1, 100)
        v = rng.uniform(-6, 8, 100)
        _, _, _, _, force, p_mech, _ = flow_quantities(p, r, beta, phi, alpha, v)
        assert np.all(force >= 0.0)

    def test_crosswind_power_law_reel_factor(self):
        # analytic oracle: P(f) ~ f(1-f)^2 peaks at f=1/3 with value 4/27
        p = uniform_params(w=10.0)
        f = np.linspace(0.01, 0.95, 2001)
        x = KiteState(300.0, 1e-9, 0.0, 0.0, 1.0)
        powers = [flow_state(p, x, KiteControl(0.0, 10.0 * fi, 0.0)).p_mech
                  for fi in f]
        k = f[int(np.argmax(powers))]
        assert k == pytest.approx(1.0 / 3.0, abs=1e-3)
        p_max = max(powers)
        p_ref = flow_state(p, x, KiteControl(0.0, 0.0, 0.0)).force  # k * w^2
        assert p_max == pytest.approx(p_ref * 10.0 * 4.0 / 27.0, rel=1e-5)


class TestDynamics:
    def test_pure_climb(self):
        p = uniform_params()
        rates = dynamics_rhs(p, KiteState(300.0, 0.5, 0.2, 0.0, 1.0),
                             KiteControl(0.0, 0.0, 0.0))
        assert rates.phi == pytest.approx(0.0, abs=1e-12)
        assert rates.beta > 0.0
        assert rates.psi == pytest.approx(0.0, abs=1e-12)
        assert rates.r == 0.0
        assert rates.alpha == 0.0

    def test_zero_tangential_speed_freezes_angles(self):
        p = uniform_params(w=2.0)
        # reel out exactly at the local wind: w_e = 0
        x = KiteState(300.0, 1e-9, 0.0, 0.4, 1.0)
        rates = dynamics_rhs(p, x, KiteControl(0.5, 2.0, 0.0))
        assert rates.beta == pytest.approx(0.0, abs=1e-9)
        assert rates.phi == pytest.approx(0.0, abs=1e-9)
        assert rates.psi == pytest.approx(0.0, abs=1e-9)
        assert rates.r == 2.0

    def test_crosswind_azimuth_rate(self):
        # oracle: v_tan/(r cos beta) = 20/(300 cos(pi/6))
        p = uniform_params(w=2.0)
        x = KiteState(300.0, np.pi / 6, 0.0, np.pi / 2, 1.0)
        fs = flow_state(p, x, KiteControl(0.0, 0.0, 0.0))
        scale = 20.0 / fs.v_tan  # rescale wind so v_tan is exactly 20
        p2 = uniform_params(w=2.0 * scale)
        rates = dynamics_rhs(p2, x, KiteControl(0.0, 0.0, 0.0))
        assert rates.phi == pytest.approx(0.0769800358919501, rel=1e-9)
        assert rates.beta == pytest.approx(0.0, abs=1e-12)


class TestCycleEnergy:
    def test_constant_generation(self):
        t = np.linspace(0.0, 100.0, 11)
        e = cycle_energy(t, np.full(11, 10e3))
        assert e.w_out == pytest.approx(1.0e6)
        assert e.w_in == 0.0
        assert e.p_mean == pytest.approx(10e3)

    def test_two_phase_mean(self):
        # 80 s at +15 kW then 20 s at -10 kW; mean (1.2 - 0.2) MJ / 100 s
        t = np.array([0.0, 80.0, 80.0 + 1e-9, 100.0])
        p = np.array([15e3, 15e3, -10e3, -10e3])
        e = cycle_energy(t, p)
        assert e.w_out == pytest.approx(1.2e6, rel=1e-6)
        assert e.w_in == pytest.approx(0.2e6, rel=1e-4)
        assert e.p_mean == pytest.approx(10e3, rel=1e-5)

    def test_zero_power_zero_energy(self):
        t = np.linspace(0.0, 50.0, 21)
        e = cycle_energy(t, np.zeros(21))
        assert e.w_out == 0.0 and e.w_in == 0.0 and e.p_mean == 0.0

    def test_monotonicity_required(self):
        with pytest.raises(ValueError):
            cycle_energy(np.array([0.0, 2.0, 1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            cycle_energy(np.array([5.0]), np.array([1.0]))

    def test_phase_labels(self):
        labels = phase_labels(np.array([1.0, 0.0, -2.0]))
        assert list(labels) == ["out", "in", "in"]


class TestSystemParams:
    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            SystemParams(force_min=2e5, force_max=6e4)
        with pytest.raises(ValueError):
            SystemParams(reel_min=1.0)
        with pytest.raises(ValueError):
            SystemParams(eta_gen=0.0)
