import numpy as np
import pytest

from kitecycle.ipm import SolverOptions
from kitecycle.kite import SystemParams
from kitecycle.ocp import ConfigurationError
from kitecycle.pilot import (MultiStartError, PilotOptions, multi_start,
                             optimize_once, sensitivity, sweep)

FAST = PilotOptions(n_intervals=24, starts=2,
                    solver=SolverOptions(max_iter=900, mu_init=1e-2))


@pytest.fixture(scope="module")
def params():
    return SystemParams()


@pytest.fixture(scope="module")
def base_run(params):
    result, sol = optimize_once(params, 8.0, FAST)
    return result, sol


class TestOptimizeOnce:
    def test_feasible_positive_power(self, base_run):
        result, _ = base_run
        assert result.status in ("optimal", "acceptable")
        assert result.p_mean > 0.0
        assert result.max_violation <= 1e-6
        height = result.states[:, 0] * np.sin(result.states[:, 1])
        assert height.min() >= SystemParams().height_min - 1e-4

    def test_power_cap_respected(self, params):
        result, _ = optimize_once(params, 14.0, FAST)
        assert result.status in ("optimal", "acceptable")
        assert result.p_elec.max() <= params.power_rated * (1.0 + 5e-3)

    def test_below_cutin_reported_honestly(self, params):
        # barely any wind: no positive-power cycle is fabricated
        result, _ = optimize_once(params, 1.0, FAST)
        assert (not result.feasible) or result.p_mean <= 0.0

    def test_provenance_recorded(self, base_run):
        result, _ = base_run
        assert result.provenance["wind"] == 8.0
        assert result.provenance["n_intervals"] == 24

    def test_warm_start_path(self, params, base_run):
        _, sol = base_run
        result, _ = optimize_once(params, 8.5, FAST, warm_from=sol)
        assert result.status in ("optimal", "acceptable")


class TestMultiStart:
    def test_k1_equals_unperturbed_single(self, params, base_run):
        single, _ = base_run
        best, _, results = multi_start(params, 8.0, 1, opts=FAST)
        assert len(results) == 1
        assert best.p_mean == single.p_mean
        assert np.array_equal(best.states, single.states)

    def test_best_dominates_members(self, params):
        best, _, results = multi_start(params, 8.0, 3, opts=FAST)
        for r in results:
            if r.feasible:
                assert best.p_mean >= r.p_mean

    def test_deterministic_given_seeds(self, params):
        b1, _, _ = multi_start(params, 8.0, 2, seeds=[None, 7], opts=FAST)
        b2, _, _ = multi_start(params, 8.0, 2, seeds=[None, 7], opts=FAST)
        assert np.array_equal(b1.states, b2.states)
        assert b1.p_mean == b2.p_mean

    def test_k_must_be_positive(self, params):
        with pytest.raises(ConfigurationError):
            multi_start(params, 8.0, 0, opts=FAST)


class TestSweep:
    def test_singleton_grid_matches_multi_start(self, params):
        curve = sweep([8.0], params, FAST, log=open("/dev/null", "w"))
        best, _, _ = multi_start(params, 8.0, FAST.starts, opts=FAST)
        assert len(curve.points) == 1
        pt = curve.points[0]
        assert pt.feasible
        assert pt.p_mean == pytest.approx(best.p_mean, rel=1e-12)

    def test_rows_sorted_ascending(self, params):
        curve = sweep([7.0, 9.0], params, FAST, log=open("/dev/null", "w"))
        rows = curve.as_rows()
        assert [r[0] for r in rows] == [7.0, 9.0]

    def test_grid_must_ascend(self, params):
        with pytest.raises(ConfigurationError):
            sweep([9.0, 7.0], params, FAST)


class TestSensitivity:
    def test_area_sensitivity_positive_below_rating(self, params):
        # at low wind the cycle is force-limited, not rating-limited, and a
        # larger kite pulls harder: mean power grows with area
        opts = FAST.replace(starts=1)
        _, entries = sensitivity(params, 6.0, ["area"], rel_step=0.05, opts=opts)
        entry = entries[0]
        assert entry.available
        assert entry.derivative > 0.0
        assert entry.p_mean_plus > entry.p_mean_minus

    def test_reports_bracketing_values(self, params):
        opts = FAST.replace(starts=1)
        _, entries = sensitivity(params, 8.0, ["force_max"], rel_step=0.03, opts=opts)
        e = entries[0]
        assert e.base_value == params.force_max
        assert np.isfinite(e.p_mean_plus) and np.isfinite(e.p_mean_minus)

    def test_zero_step_rejected(self, params):
        with pytest.raises(ConfigurationError):
            sensitivity(params, 8.0, ["area"], rel_step=0.0, opts=FAST)

    def test_unknown_parameter_named(self, params):
        with pytest.raises(ConfigurationError, match="no_such"):
            sensitivity(params, 8.0, ["no_such"], rel_step=0.02, opts=FAST)

    def test_dotted_parameter_path(self, params):
        opts = FAST.replace(starts=1)
        _, entries = sensitivity(params, 6.0, ["aero.cl_max"], rel_step=0.03,
                                 opts=opts)
        assert entries[0].available
