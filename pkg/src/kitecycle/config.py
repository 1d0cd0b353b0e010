"""Toolkit configuration: one structured text file with strict keys.

Every key has a default; unknown keys are rejected with their full path.
The canonical form (sorted keys, plain YAML) is byte-stable, and its hash
identifies the configuration in result summaries.
"""

from __future__ import annotations

import hashlib
import math

import yaml

from .atmosphere import AeroTrimMap, WindProfile
from .guess import GuessRecipe
from .ipm import SolverOptions
from .kite import SystemParams
from .ocp import ConfigurationError, OcpOptions
from .pilot import PilotOptions

DEFAULTS = {
    "system": {
        "area_m2": 120.0,
        "air_density_kgpm3": 1.225,
        "steering_gain_radpm": 0.1,
        "gen_efficiency": 0.9,
        "motor_efficiency": 0.9,
        "force_min_n": 1000.0,
        "force_max_n": 60000.0,
        "power_rated_w": 200000.0,
        "tether_min_m": 200.0,
        "tether_max_m": 600.0,
        "height_min_m": 80.0,
        "reel_min_mps": -6.0,
        "reel_max_mps": 8.0,
        "trim_rate_max_1ps": 0.2,
        "wind_eff_min_mps": 0.5,
        "power_blend_w": 100.0,
    },
    "aero": {
        "cl_min": 0.3,
        "cl_max": 1.0,
        "cd0": 0.04,
        "k_induced": 0.06,
    },
    "wind": {
        "ref_speed_mps": 10.0,
        "ref_height_m": 100.0,
        "shear_exponent": 0.14,
        "floor_height_m": 1.0,
    },
    "ocp": {
        "eps_reg": 1.0e-3,
        "cycle_time_min_s": 40.0,
        "cycle_time_max_s": 400.0,
        "elevation_min_deg": 10.0,
        "elevation_max_deg": 80.0,
        "azimuth_max_deg": 60.0,
        "trim_min": 0.0,
        "trim_max": 1.0,
    },
    "mesh": {
        "n_intervals": 120,
    },
    "solver": {
        "tol_opt": 1.0e-6,
        "tol_feas": 1.0e-6,
        "tol_accept": 1.0e-4,
        "max_iter": 1500,
        "mu_init": 1.0e-2,
        "memory": 20,
    },
    "guess": {
        "n_eights": None,
        "beta_center_deg": 30.0,
        "beta_amp_deg": 6.0,
        "phi_amp_deg": 25.0,
        "beta_high_deg": 75.0,
        "reel_out_fraction": 0.75,
        "force_target": 0.7,
        "t_base_s": 220.0,
        "t_slope_spm": 10.0,
        "w_base_mps": 8.0,
    },
    "plan": {
        "wind_mps": 8.0,
        "grid_lo_mps": 5.0,
        "grid_hi_mps": 18.0,
        "grid_step_mps": 1.0,
        "starts": 5,
        "seeds": None,
        "perturb_magnitude": 0.05,
        "continuation": True,
        "refresh_every": 3,
        "sensitivity_rel_step": 0.02,
    },
}

# keys whose value may be None or a list
_NULLABLE = {("guess", "n_eights"), ("plan", "seeds")}


def _merge(defaults, user, path=""):
    out = {}
    for key, dval in defaults.items():
        out[key] = dval
    if user is None:
        return out
    if not isinstance(user, dict):
        raise ConfigurationError(f"section {path or '<root>'} must be a mapping")
    for key, val in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigurationError(f"unknown configuration key: {here}")
        dval = defaults[key]
        if isinstance(dval, dict):
            out[key] = _merge(dval, val, here)
        else:
            out[key] = _check_scalar(here, val, dval)
    return out


def _check_scalar(path, val, default):
    parts = tuple(path.split("."))
    if val is None:
        if parts in _NULLABLE:
            return None
        raise ConfigurationError(f"configuration key {path} must not be null")
    if parts == ("plan", "seeds"):
        if not isinstance(val, list) or not all(
                v is None or isinstance(v, int) for v in val):
            raise ConfigurationError(f"{path} must be a list of seeds")
        return list(val)
    if isinstance(default, bool) or (default is None and isinstance(val, bool)):
        if not isinstance(val, bool):
            raise ConfigurationError(f"{path} must be a boolean")
        return bool(val)
    if isinstance(val, bool):
        raise ConfigurationError(f"{path} must be a number")
    if isinstance(default, int) and not isinstance(default, bool) \
            and not isinstance(val, int):
        if isinstance(val, float) and val.is_integer():
            return int(val)
        raise ConfigurationError(f"{path} must be an integer")
    if not isinstance(val, (int, float)):
        raise ConfigurationError(f"{path} must be a number")
    return type(default)(val) if default is not None else val


def load_config(path=None):
    """Parse a configuration file merged over the defaults."""
    if path is None:
        return _merge(DEFAULTS, {})
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"configuration file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed configuration {path}: {exc}") from exc
    return _merge(DEFAULTS, user or {})


def canonical_yaml(cfg):
    """Byte-stable canonical rendering of a parsed configuration."""
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def config_hash(cfg):
    return hashlib.sha256(canonical_yaml(cfg).encode()).hexdigest()[:16]


def system_params(cfg) -> SystemParams:
    s, a, w = cfg["system"], cfg["aero"], cfg["wind"]
    return SystemParams(
        area=s["area_m2"], air_density=s["air_density_kgpm3"],
        steering_gain=s["steering_gain_radpm"],
        aero=AeroTrimMap(cl_min=a["cl_min"], cl_max=a["cl_max"],
                         cd0=a["cd0"], k_induced=a["k_induced"]),
        wind=WindProfile(w_ref=w["ref_speed_mps"], h_ref=w["ref_height_m"],
                         shear_exp=w["shear_exponent"], h_floor=w["floor_height_m"]),
        eta_gen=s["gen_efficiency"], eta_mot=s["motor_efficiency"],
        force_min=s["force_min_n"], force_max=s["force_max_n"],
        power_rated=s["power_rated_w"], tether_min=s["tether_min_m"],
        tether_max=s["tether_max_m"], height_min=s["height_min_m"],
        reel_min=s["reel_min_mps"], reel_max=s["reel_max_mps"],
        trim_rate_max=s["trim_rate_max_1ps"], wind_eff_min=s["wind_eff_min_mps"],
        power_blend=s["power_blend_w"])


def pilot_options(cfg) -> PilotOptions:
    o, m, sv, g, pl = cfg["ocp"], cfg["mesh"], cfg["solver"], cfg["guess"], cfg["plan"]
    if m["n_intervals"] < 10:
        raise ConfigurationError("mesh.n_intervals must be at least 10")
    ocp = OcpOptions(
        eps_reg=o["eps_reg"],
        t_bounds=(o["cycle_time_min_s"], o["cycle_time_max_s"]),
        elevation_box=(math.radians(o["elevation_min_deg"]),
                       math.radians(o["elevation_max_deg"])),
        azimuth_box=(-math.radians(o["azimuth_max_deg"]),
                     math.radians(o["azimuth_max_deg"])),
        trim_box=(o["trim_min"], o["trim_max"]))
    solver = SolverOptions(tol_opt=sv["tol_opt"], tol_feas=sv["tol_feas"],
                           tol_accept=sv["tol_accept"], max_iter=sv["max_iter"],
                           mu_init=sv["mu_init"], memory=sv["memory"])
    recipe = GuessRecipe(
        n_eights=g["n_eights"],
        beta_center=math.radians(g["beta_center_deg"]),
        beta_amp=math.radians(g["beta_amp_deg"]),
        phi_amp=math.radians(g["phi_amp_deg"]),
        beta_high=math.radians(g["beta_high_deg"]),
        reel_out_fraction=g["reel_out_fraction"],
        force_target=g["force_target"],
        t_base=g["t_base_s"], t_slope=g["t_slope_spm"], w_base=g["w_base_mps"])
    return PilotOptions(n_intervals=m["n_intervals"], starts=pl["starts"],
                        perturb_magnitude=pl["perturb_magnitude"], solver=solver,
                        ocp=ocp, recipe=recipe, refresh_every=pl["refresh_every"],
                        feas_tol=sv["tol_feas"])


def plan_grid(cfg):
    pl = cfg["plan"]
    lo, hi, step = pl["grid_lo_mps"], pl["grid_hi_mps"], pl["grid_step_mps"]
    if step <= 0 or hi < lo:
        raise ConfigurationError("plan grid must ascend with a positive step")
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1) if lo + i * step <= hi + 1e-9]
