import numpy as np
import pytest
import yaml

from kitecycle.config import (DEFAULTS, canonical_yaml, config_hash, load_config,
                              pilot_options, plan_grid, system_params)
from kitecycle.files import (POWER_CURVE_HEADER, TRAJECTORY_HEADER, lobe_count,
                             phase_fractions, read_power_curve, read_trajectory,
                             recompute_energy_from_table, result_from_table,
                             summary_dict, write_power_curve, write_summary,
                             write_trajectory)
from kitecycle.kite import SystemParams
from kitecycle.ocp import ConfigurationError


@pytest.fixture()
def small_result():
    from kitecycle.collocate import Mesh, extract, transcribe
    from kitecycle.guess import synth_guess
    from kitecycle.ocp import build_ocp, scale
    params = SystemParams().replace(wind=SystemParams().wind.replace_ref(8.0))
    prob, _ = scale(build_ocp(params))
    nlp = transcribe(prob, Mesh(20))
    return extract(nlp, synth_guess(nlp, 8.0))


class TestTrajectoryFile:
    def test_round_trip(self, tmp_path, small_result):
        path = tmp_path / "trajectory.csv"
        write_trajectory(path, small_result)
        table = read_trajectory(path)
        assert tuple(table.keys())[:len(TRAJECTORY_HEADER)] == TRAJECTORY_HEADER
        assert table["t_s"] == pytest.approx(small_result.t, rel=1e-15)
        assert table["F_t_N"] == pytest.approx(small_result.force, rel=1e-15)
        assert list(table["phase"]) == list(small_result.phase)

    def test_summary_energy_matches_table_recomputation(self, tmp_path, small_result):
        path = tmp_path / "trajectory.csv"
        write_trajectory(path, small_result)
        table = read_trajectory(path)
        energy = recompute_energy_from_table(table)
        summary = summary_dict(small_result)
        assert summary["P_mean_W"] == pytest.approx(energy.p_mean, rel=1e-9)
        assert summary["W_reel_out_J"] == pytest.approx(energy.w_out, rel=1e-9)
        assert summary["W_reel_in_J"] == pytest.approx(energy.w_in, rel=1e-9)

    def test_byte_identical_rewrites(self, tmp_path, small_result):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trajectory(p1, small_result)
        write_trajectory(p2, small_result)
        assert p1.read_bytes() == p2.read_bytes()

    def test_result_from_table_round_trip(self, tmp_path, small_result):
        path = tmp_path / "trajectory.csv"
        write_trajectory(path, small_result)
        rebuilt = result_from_table(read_trajectory(path))
        assert rebuilt.p_mean == pytest.approx(small_result.p_mean, rel=1e-12)
        assert rebuilt.states == pytest.approx(small_result.states, rel=1e-15)

    def test_mandatory_summary_keys(self, small_result):
        summary = summary_dict(small_result)
        assert {"W_reel_out_J", "W_reel_in_J", "T_cycle_s", "P_mean_W"} <= set(summary)

    def test_lobe_count_and_fractions(self, tmp_path, small_result):
        path = tmp_path / "trajectory.csv"
        write_trajectory(path, small_result)
        table = read_trajectory(path)
        assert lobe_count(table) >= 1
        f_out, f_in = phase_fractions(table)
        assert f_out + f_in == pytest.approx(1.0)


class TestPowerCurveFile:
    def test_round_trip(self, tmp_path):
        rows = [(5.0, 31000.5, "optimal", 0.42, 59999.1),
                (6.0, 40000.0, "optimal", 0.45, 60000.0)]
        path = tmp_path / "power_curve.csv"
        write_power_curve(path, rows)
        back = read_power_curve(path)
        assert back[0][0] == 5.0
        assert back[1][1] == pytest.approx(40000.0)
        assert back[0][2] == "optimal"

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("nope\n1,2,3\n")
        with pytest.raises(ValueError):
            read_power_curve(path)


class TestConfig:
    def test_defaults_load_without_file(self):
        cfg = load_config(None)
        assert cfg == DEFAULTS

    def test_shipped_example_matches_defaults(self):
        from pathlib import Path
        example = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"
        cfg = load_config(example)
        assert cfg == DEFAULTS

    def test_unknown_key_rejected_with_path(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("system:\n  area_m2: 100.0\n  blorp: 1\n")
        with pytest.raises(ConfigurationError, match="system.blorp"):
            load_config(path)

    def test_missing_file_names_path(self):
        with pytest.raises(ConfigurationError, match="nowhere.yaml"):
            load_config("nowhere.yaml")

    def test_type_checks(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("mesh:\n  n_intervals: twelve\n")
        with pytest.raises(ConfigurationError, match="mesh.n_intervals"):
            load_config(path)

    def test_canonical_yaml_stable(self, tmp_path):
        path = tmp_path / "partial.yaml"
        path.write_text("plan:\n  wind_mps: 9.5\n")
        c1 = canonical_yaml(load_config(path))
        c2 = canonical_yaml(load_config(path))
        assert c1 == c2
        assert yaml.safe_load(c1)["plan"]["wind_mps"] == 9.5
        assert config_hash(load_config(path)) != config_hash(load_config(None))

    def test_objects_built_from_defaults(self):
        cfg = load_config(None)
        params = system_params(cfg)
        assert params.area == 120.0
        assert params.wind.shear_exp == 0.14
        opts = pilot_options(cfg)
        assert opts.n_intervals == 120
        assert opts.starts == 5
        grid = plan_grid(cfg)
        assert grid[0] == 5.0 and grid[-1] == 18.0 and len(grid) == 14

    def test_every_system_default_representable(self):
        # each physical default of the parameter record appears in the schema
        cfg = load_config(None)
        params = system_params(cfg)
        assert params == SystemParams()

    def test_mesh_floor_enforced(self, tmp_path):
        path = tmp_path / "coarse.yaml"
        path.write_text("mesh:\n  n_intervals: 4\n")
        with pytest.raises(ConfigurationError, match="n_intervals"):
            pilot_options(load_config(path))
