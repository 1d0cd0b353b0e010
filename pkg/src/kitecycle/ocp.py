"""Continuous-time periodic economic optimal control problem assembly.

An :class:`OcpProblem` is a generic immutable container: any state/control
dimension, smooth stage functions, box bounds, optional periodicity and a
free or fixed cycle time.  :func:`build_ocp` instantiates the pumping-cycle
problem (maximize mean electrical power subject to operational limits);
:func:`build_reeling_ocp` builds the pinned-downwind reeling benchmark whose
optimum is known in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .kite import CONTROL_NAMES, STATE_NAMES, SystemParams, flow_quantities, state_rates


class ConfigurationError(ValueError):
    """Inconsistent problem configuration (bounds, boxes, unknown names)."""


@dataclass(frozen=True)
class Scaling:
    """Characteristic magnitudes mapping decision quantities to O(1).

    The inverse map restores physical units exactly (elementwise division
    and multiplication round-trip to machine precision).
    """

    x: np.ndarray
    u: np.ndarray
    t: float

    def __post_init__(self):
        if np.any(np.asarray(self.x) <= 0.0) or np.any(np.asarray(self.u) <= 0.0) or self.t <= 0.0:
            raise ConfigurationError("scaling magnitudes must be positive")

    @classmethod
    def identity(cls, n_x, n_u):
        return cls(np.ones(n_x), np.ones(n_u), 1.0)

    def scale_states(self, x_phys):
        return np.asarray(x_phys, dtype=float) / self.x

    def unscale_states(self, x_scaled):
        return np.asarray(x_scaled, dtype=float) * self.x

    def scale_controls(self, u_phys):
        return np.asarray(u_phys, dtype=float) / self.u

    def unscale_controls(self, u_scaled):
        return np.asarray(u_scaled, dtype=float) * self.u


@dataclass(frozen=True)
class OcpProblem:
    """Assembled continuous-time optimal control problem.

    The stage evaluator computes, for batched (possibly dual) state and
    control component arrays, the state rates, the stacked path-constraint
    rows (each row family >= 0, physical units) and the running-cost
    integrand whose time average over the cycle is minimized.

    Attributes:
        path_names: names of the functional path constraints, row order of
            the stage evaluator output.
        box_names: bound-type constraints enforced through variable boxes,
            listed for auditability.
        relaxed: constraint name -> penalty weight for constraints softened
            into nonnegative slacks.
        t_bounds: (lo, hi) cycle-time bounds; lo == hi pins the duration.
    """

    state_names: tuple
    control_names: tuple
    stage_eval: object
    path_names: tuple
    path_scales: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    t_bounds: tuple
    periodic: bool = True
    eps_reg: float = 0.0
    rate_scales: np.ndarray = None
    time_ref: float = 100.0
    relaxable: frozenset = frozenset()
    relaxed: dict = field(default_factory=dict)
    box_names: tuple = ()
    scaling: Scaling = None
    params: SystemParams = None
    obj_power_scale: float = 1.0
    flow_eval: object = None  # (x_cols, u_cols) -> (force, p_elec, wind_eff), for reporting

    def __post_init__(self):
        n_x, n_u = len(self.state_names), len(self.control_names)
        if self.rate_scales is None:
            object.__setattr__(self, "rate_scales", np.ones(n_u))
        if self.scaling is None:
            object.__setattr__(self, "scaling", Scaling.identity(n_x, n_u))
        t_lo, t_hi = self.t_bounds
        if t_lo <= 0.0 or t_hi < t_lo:
            raise ConfigurationError(f"bad cycle-time bounds ({t_lo}, {t_hi})")
        if np.any(self.x_lb >= self.x_ub) and not np.any(np.isinf(self.x_lb)):
            pass  # equal bounds allowed only through explicit pinning below
        if len(self.path_scales) != len(self.path_names):
            raise ConfigurationError("one scale per path constraint required")

    @property
    def n_states(self):
        return len(self.state_names)

    @property
    def n_controls(self):
        return len(self.control_names)

    @property
    def n_path(self):
        return len(self.path_names)

    @property
    def t_fixed(self):
        return self.t_bounds[0] if self.t_bounds[0] == self.t_bounds[1] else None

    def constraint_summary(self):
        """Names and kinds of all constraints, echoed into result summaries."""
        entries = [{"name": n, "kind": "path", "relaxed": n in self.relaxed}
                   for n in self.path_names]
        entries += [{"name": n, "kind": "box", "relaxed": False} for n in self.box_names]
        if self.periodic:
            entries.append({"name": "periodicity", "kind": "boundary", "relaxed": False})
        return entries


def make_ocp(state_names, control_names, dynamics, integrand=None, path=None,
             path_names=(), path_scales=None, **kwargs):
    """Assemble a generic OcpProblem from separate stage functions.

    ``dynamics(x_cols, u_cols) -> rates`` is mandatory; ``integrand`` defaults
    to zero and ``path`` to no rows.  Used for test problems and benchmarks.
    """
    n_path = len(path_names)

    def stage_eval(x_cols, u_cols):
        rates = dynamics(x_cols, u_cols)
        rows = path(x_cols, u_cols) if path is not None else []
        cost = integrand(x_cols, u_cols) if integrand is not None else \
            ad.value(x_cols[0]) * 0.0
        return rates, rows, cost

    if path_scales is None:
        path_scales = np.ones(n_path)
    return OcpProblem(state_names=tuple(state_names), control_names=tuple(control_names),
                      stage_eval=stage_eval, path_names=tuple(path_names),
                      path_scales=np.asarray(path_scales, dtype=float), **kwargs)


@dataclass(frozen=True)
class OcpOptions:
    """Tunable assembly options for the pumping-cycle problem."""

    eps_reg: float = 1.0e-3
    t_bounds: tuple = (40.0, 400.0)
    elevation_box: tuple = (math.radians(10.0), math.radians(80.0))
    azimuth_box: tuple = (-math.radians(60.0), math.radians(60.0))
    trim_box: tuple = (0.0, 1.0)
    heading_box: tuple = (-4.0 * math.pi, 4.0 * math.pi)
    time_ref: float = 100.0


KITE_PATH_NAMES = ("height", "force_hi", "force_lo", "power_cap", "effective_wind")
KITE_RELAXABLE = frozenset({"force_lo", "effective_wind"})
KITE_BOX_NAMES = ("elevation_box", "azimuth_box", "trim_box",
                  "reel_box", "steer_box", "trim_rate_box")


def build_ocp(params: SystemParams, options: OcpOptions = OcpOptions()) -> OcpProblem:
    """Pumping-cycle problem: minimize -(mean electrical power)/P_rated.

    Periodic in all five states, free cycle time, with height floor, tether
    force window, rated-power cap and effective-wind floor as path
    constraints.  Elevation/azimuth/trim boxes and actuator limits are
    variable bounds.
    """
    beta_lo, beta_hi = options.elevation_box
    if not 0.0 < beta_lo < beta_hi < math.pi / 2:
        raise ConfigurationError("elevation box must lie strictly inside (0, 90 deg)")
    if params.height_min >= params.tether_max * math.sin(beta_hi):
        raise ConfigurationError(
            "height floor unreachable: "
            f"height_min={params.height_min} but tether_max*sin(beta_max)="
            f"{params.tether_max * math.sin(beta_hi):.1f}")
    if params.height_min >= params.tether_max:
        raise ConfigurationError(
            f"height floor unreachable: height_min={params.height_min} "
            f"exceeds tether_max={params.tether_max}")

    p = params

    def stage_eval(x_cols, u_cols):
        r, beta, phi, psi, alpha = x_cols
        u_steer, v_reel, u_trim = u_cols
        height, _, wind_eff, v_tan, force, _, p_elec = flow_quantities(
            p, r, beta, phi, alpha, v_reel)
        inv_r = 1.0 / r
        d_beta = v_tan * inv_r * ad.cos(psi)
        d_phi = v_tan * inv_r / ad.cos(beta) * ad.sin(psi)
        d_psi = p.steering_gain * v_tan * u_steer + d_phi * ad.sin(beta)
        rates = (v_reel, d_beta, d_phi, d_psi, u_trim)
        rows = [height - p.height_min,
                p.force_max - force,
                force - p.force_min,
                p.power_rated - p_elec,
                wind_eff - p.wind_eff_min]
        cost = -p_elec / p.power_rated
        return rates, rows, cost

    def flow_eval(x_cols, u_cols):
        r, beta, phi, _, alpha = x_cols
        _, v_reel, _ = u_cols
        _, _, wind_eff, _, force, _, p_elec = flow_quantities(p, r, beta, phi, alpha, v_reel)
        return force, p_elec, wind_eff

    x_lb = np.array([p.tether_min, beta_lo, options.azimuth_box[0],
                     options.heading_box[0], options.trim_box[0]])
    x_ub = np.array([p.tether_max, beta_hi, options.azimuth_box[1],
                     options.heading_box[1], options.trim_box[1]])
    u_lb = np.array([-1.0, p.reel_min, -p.trim_rate_max])
    u_ub = np.array([1.0, p.reel_max, p.trim_rate_max])
    path_scales = np.array([p.tether_max, p.force_max, p.force_max,
                            p.power_rated, p.wind.w_ref])
    rate_scales = np.array([1.0, max(p.reel_max, -p.reel_min), p.trim_rate_max])

    return OcpProblem(
        state_names=STATE_NAMES, control_names=CONTROL_NAMES,
        stage_eval=stage_eval, path_names=KITE_PATH_NAMES,
        path_scales=path_scales, x_lb=x_lb, x_ub=x_ub, u_lb=u_lb, u_ub=u_ub,
        t_bounds=options.t_bounds, periodic=True, eps_reg=options.eps_reg,
        rate_scales=rate_scales, time_ref=options.time_ref,
        relaxable=KITE_RELAXABLE, box_names=KITE_BOX_NAMES,
        params=params, obj_power_scale=params.power_rated, flow_eval=flow_eval)


def build_reeling_ocp(params: SystemParams, w_uniform, trim=1.0, duration=60.0,
                      r_span=None, n_path_wind=True) -> OcpProblem:
    """Pinned-downwind reeling benchmark with force and rating caps lifted.

    Uniform wind of speed ``w_uniform`` blows straight along the tether
    (alignment cosine one), the trim is frozen and there is no steering;
    the only state is the tether length and the only control the reel
    speed.  The mechanical-power optimum is analytic: reel factor 1/3 and
    power 0.5*rho*A*c_R*(1+E^2)*w^3*(4/27), which makes this problem the
    calibration oracle for the whole transcription/solver stack.
    """
    p = params
    w = float(w_uniform)
    if r_span is None:
        r_span = (p.tether_min, p.tether_max)
    from .atmosphere import force_factor
    k_force = 0.5 * p.air_density * p.area * float(force_factor(p.aero, trim))
    p_star = k_force * w ** 3 * 4.0 / 27.0  # objective conditioning scale

    def stage_eval(x_cols, u_cols):
        (r,), (v_reel,) = x_cols, u_cols
        wind_eff = w - v_reel
        force = k_force * wind_eff * wind_eff
        p_mech = force * v_reel
        rows = [wind_eff - p.wind_eff_min] if n_path_wind else []
        cost = -p_mech / p_star
        return (v_reel,), rows, cost

    def flow_eval(x_cols, u_cols):
        (v_reel,) = u_cols
        wind_eff = w - v_reel
        force = k_force * wind_eff * wind_eff
        return force, force * v_reel, wind_eff

    path_names = ("effective_wind",) if n_path_wind else ()
    return OcpProblem(
        state_names=("r",), control_names=("v_reel",),
        stage_eval=stage_eval, path_names=path_names,
        path_scales=np.array([w] * len(path_names)),
        x_lb=np.array([r_span[0]]), x_ub=np.array([r_span[1]]),
        u_lb=np.array([p.reel_min]), u_ub=np.array([p.reel_max]),
        t_bounds=(float(duration), float(duration)), periodic=False,
        eps_reg=0.0, rate_scales=np.array([max(p.reel_max, -p.reel_min)]),
        relaxable=frozenset(), box_names=("reel_box",),
        params=params, obj_power_scale=p_star, flow_eval=flow_eval)


def relax(problem: OcpProblem, constraint_name: str, weight: float) -> OcpProblem:
    """Soften a relaxable path constraint c >= 0 to c + s >= 0, s >= 0.

    The slack enters the objective as weight * (time average of s); an
    inactive relaxation (s = 0 feasible) leaves the optimum unchanged, and
    weight -> infinity recovers the hard problem.
    """
    if constraint_name not in problem.path_names:
        raise ConfigurationError(f"unknown constraint {constraint_name!r}")
    if constraint_name not in problem.relaxable:
        raise ConfigurationError(f"constraint {constraint_name!r} is not relaxable")
    if weight <= 0.0:
        raise ConfigurationError("relaxation weight must be positive")
    relaxed = dict(problem.relaxed)
    relaxed[constraint_name] = float(weight)
    return replace(problem, relaxed=relaxed)


def default_scaling(problem: OcpProblem) -> Scaling:
    """Characteristic magnitudes derived from bounds and parameters."""
    x_sc = np.ones(problem.n_states)
    u_sc = np.ones(problem.n_controls)
    for i, name in enumerate(problem.state_names):
        lo, hi = problem.x_lb[i], problem.x_ub[i]
        mag = max(abs(lo), abs(hi))
        if name == "r" and problem.params is not None:
            x_sc[i] = problem.params.tether_max
        elif np.isfinite(mag) and mag > 0:
            x_sc[i] = 1.0 if mag < 10.0 else mag  # angles and trims stay O(1)
    for i in range(problem.n_controls):
        lo, hi = problem.u_lb[i], problem.u_ub[i]
        mag = max(abs(lo), abs(hi))
        u_sc[i] = mag if np.isfinite(mag) and mag > 0 else 1.0
    t_sc = problem.time_ref
    return Scaling(x_sc, u_sc, t_sc)


def scale(problem: OcpProblem):
    """Attach canonical scaling; returns (scaled problem, scaling map).

    The scaled problem is the same mathematical problem expressed in O(1)
    decision quantities; the returned map restores physical units exactly.
    """
    sc = default_scaling(problem)
    return replace(problem, scaling=sc), sc
