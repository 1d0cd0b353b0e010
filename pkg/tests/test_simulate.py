import numpy as np
import pytest

from kitecycle.kite import KiteState, SystemParams
from kitecycle.simulate import (ControlSchedule, IntegrationError, SimTrajectory,
                                integrate, rk4_integrate, validate)


class TestRk4Core:
    def test_scalar_decay(self):
        # oracle: x(1) = exp(-1)
        grid = np.linspace(0.0, 1.0, 101)
        out = rk4_integrate(lambda t, x: -x, np.array([1.0]), grid)
        assert out[-1, 0] == pytest.approx(0.36787944117144233, abs=1e-6)

    def test_convergence_order_four(self):
        # halving the step scales the endpoint error by about 2^4
        def err(n):
            grid = np.linspace(0.0, 1.0, n + 1)
            out = rk4_integrate(lambda t, x: -x, np.array([1.0]), grid)
            return abs(out[-1, 0] - np.exp(-1.0))
        ratio = err(50) / err(100)
        order = np.log2(ratio)
        assert 3.8 <= order <= 4.2

    def test_nonautonomous(self):
        # dx/dt = cos t -> x(T) = sin T
        grid = np.linspace(0.0, 2.0, 201)
        out = rk4_integrate(lambda t, x: np.array([np.cos(t)]),
                            np.array([0.0]), grid)
        assert out[-1, 0] == pytest.approx(np.sin(2.0), abs=1e-9)

    def test_nonfinite_aborts_with_timestamp(self):
        grid = np.linspace(0.0, 2.0, 21)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(IntegrationError) as err:
                rk4_integrate(lambda t, x: x * x * 1e30, np.array([1.0]), grid)
        assert err.value.t_abort <= 2.0


class TestControlSchedule:
    def test_exact_at_nodes_linear_between(self):
        sched = ControlSchedule(np.array([0.0, 1.0, 2.0]),
                                np.array([[0.0], [2.0], [0.0]]))
        assert sched(1.0)[0] == 2.0
        assert sched(0.5)[0] == pytest.approx(1.0)
        assert sched.duration == 2.0

    def test_bad_grid_rejected(self):
        with pytest.raises(ValueError):
            ControlSchedule(np.array([0.0, 0.0]), np.zeros((2, 1)))


class TestIntegrate:
    def test_zero_controls_constant_state(self):
        # zero tangential speed (crosswind alignment zero at 90 deg azimuth,
        # away from the zenith singularity) keeps every state frozen
        p = SystemParams().replace(
            wind=SystemParams().wind.replace_ref(2.0))
        x0 = KiteState(300.0, 0.5, np.pi / 2, 0.3, 1.0)
        sched = ControlSchedule(np.array([0.0, 10.0]), np.zeros((2, 3)))
        sim = integrate(p, x0.as_array(), sched, h_step=0.1)
        assert np.abs(sim.states - sim.states[0]).max() < 1e-9

    def test_violations_flagged_not_raised(self):
        p = SystemParams()
        # stationary high-force state: force cap violation reported
        x0 = KiteState(300.0, 0.3, 0.0, 0.0, 1.0)
        sched = ControlSchedule(np.array([0.0, 2.0]), np.zeros((2, 3)))
        sim = integrate(p, x0.as_array(), sched, h_step=0.05)
        assert isinstance(sim, SimTrajectory)
        assert sim.violations["force_hi"] > 0.0

    def test_step_size_positive(self):
        p = SystemParams()
        sched = ControlSchedule(np.array([0.0, 1.0]), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            integrate(p, KiteState(300, 0.5, 0, 0, 1).as_array(), sched, h_step=0.0)


@pytest.fixture(scope="module")
def short_cycle():
    # short pinned-duration cycle keeps the open-loop replay contractive
    from kitecycle.collocate import Mesh, extract, transcribe
    from kitecycle.guess import synth_guess
    from kitecycle.ipm import SolverOptions, solve
    from kitecycle.ocp import OcpOptions, build_ocp, scale
    params = SystemParams().replace(
        wind=SystemParams().wind.replace_ref(8.0))
    prob, _ = scale(build_ocp(params, OcpOptions(t_bounds=(55.0, 55.0))))
    nlp = transcribe(prob, Mesh(110))
    sol = solve(nlp, synth_guess(nlp, 8.0),
                SolverOptions(max_iter=1500, mu_init=1e-2))
    assert sol.status in ("optimal", "acceptable")
    return params, extract(nlp, sol.z)


class TestValidate:

    def test_replay_tracks_collocation(self, short_cycle):
        # open-loop replay of a short cycle stays near the collocation path;
        # the acceptance suite checks the production thresholds
        params, result = short_cycle
        report = validate(result, params)
        assert np.isfinite(report.max_dev_scaled)
        assert report.max_dev_scaled < 0.5
        assert abs(report.p_mean_rel_err) < 0.10
        assert report.violations["height"] < 5.0

    def test_report_is_pure(self, short_cycle):
        params, result = short_cycle
        before = result.states.copy()
        validate(result, params)
        assert np.array_equal(before, result.states)

    def test_finer_step_changes_little(self, short_cycle):
        params, result = short_cycle
        r1 = validate(result, params, h_step=result.t[-1] / 1000.0)
        r2 = validate(result, params, h_step=result.t[-1] / 4000.0)
        assert abs(r1.max_dev_scaled - r2.max_dev_scaled) < 0.02
