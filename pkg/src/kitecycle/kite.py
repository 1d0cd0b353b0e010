"""Quasi-steady crosswind point-mass model of a tethered kite on a sphere.

States are tether length r, elevation beta, azimuth phi (from the downwind
axis), heading psi on the local tangent plane, and normalized trim alpha.
Controls are steering deflection, winch reel speed and trim rate.  The kite
is massless and always in the quasi-steady crosswind equilibrium, so its
tangential speed is the glide ratio times the effective wind along the
tether.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .atmosphere import AeroTrimMap, WindProfile, aero_coeffs, wind_speed

STATE_NAMES = ("r", "beta", "phi", "psi", "alpha")
CONTROL_NAMES = ("u_steer", "v_reel", "u_trim")
N_STATES = len(STATE_NAMES)
N_CONTROLS = len(CONTROL_NAMES)


@dataclass(frozen=True)
class SystemParams:
    """Physical, aerodynamic and actuation parameters of kite, tether and winch."""

    area: float = 120.0                 # kite area [m^2]
    air_density: float = 1.225          # [kg/m^3]
    steering_gain: float = 0.1          # heading rate per unit speed at full steering [rad/m]
    aero: AeroTrimMap = field(default_factory=AeroTrimMap)
    wind: WindProfile = field(default_factory=WindProfile)
    eta_gen: float = 0.9                # generator efficiency (reel-out)
    eta_mot: float = 0.9                # motor efficiency (reel-in)
    force_min: float = 1.0e3            # tether force floor [N], relaxable in the OCP
    force_max: float = 60.0e3           # tether force cap [N]
    power_rated: float = 200.0e3        # electrical power cap [W]
    tether_min: float = 200.0           # [m]
    tether_max: float = 600.0           # [m]
    height_min: float = 80.0            # lowest allowed kite height [m]
    reel_min: float = -6.0              # reel-in speed bound [m/s] (< 0)
    reel_max: float = 8.0               # reel-out speed bound [m/s] (> 0)
    trim_rate_max: float = 0.2          # [1/s]
    wind_eff_min: float = 0.5           # minimum effective wind along tether [m/s]
    power_blend: float = 100.0          # C1 blend half-width of the efficiency split [W]

    def __post_init__(self):
        if self.area <= 0.0 or self.air_density <= 0.0:
            raise ValueError("area and air density must be positive")
        if not 0.0 < self.eta_gen <= 1.0 or not 0.0 < self.eta_mot <= 1.0:
            raise ValueError("efficiencies must be in (0, 1]")
        if not 0.0 < self.force_min < self.force_max:
            raise ValueError("need 0 < force_min < force_max")
        if not 0.0 < self.tether_min < self.tether_max:
            raise ValueError("need 0 < tether_min < tether_max")
        if self.height_min <= 0.0:
            raise ValueError("height floor must be positive")
        if not self.reel_min < 0.0 < self.reel_max:
            raise ValueError("reel speed bounds must straddle zero")
        if self.power_rated <= 0.0:
            raise ValueError("rated power must be positive")
        if self.trim_rate_max <= 0.0 or self.wind_eff_min <= 0.0:
            raise ValueError("trim rate bound and effective-wind floor must be positive")

    def replace(self, **changes):
        from dataclasses import replace as _replace
        return _replace(self, **changes)


@dataclass(frozen=True)
class KiteState:
    r: float
    beta: float
    phi: float
    psi: float
    alpha: float

    def as_array(self):
        return np.array([self.r, self.beta, self.phi, self.psi, self.alpha])

    @classmethod
    def from_array(cls, x):
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class KiteControl:
    u_steer: float
    v_reel: float
    u_trim: float

    def as_array(self):
        return np.array([self.u_steer, self.v_reel, self.u_trim])

    @classmethod
    def from_array(cls, u):
        return cls(*(float(v) for v in u))


@dataclass(frozen=True)
class FlowState:
    """Instantaneous flow and power quantities along the trajectory."""

    height: float
    cos_align: float
    wind_eff: float
    v_tan: float
    force: float
    p_mech: float
    p_elec: float


def flow_quantities(p: SystemParams, r, beta, phi, alpha, v_reel):
    """Vectorized flow state: heights, forces and powers from state/control arrays.

    Accepts plain arrays or dual arrays and returns the same kind.  The
    efficiency split between generating and motoring is blended over
    |P_mech| < power_blend so the result stays C1 in its inputs.
    """
    sin_b, cos_b = ad.sin(beta), ad.cos(beta)
    height = r * sin_b
    cos_align = cos_b * ad.cos(phi)
    w_local = wind_speed(p.wind, height)
    wind_eff = w_local * cos_align - v_reel
    _, _, glide, c_res = aero_coeffs(p.aero, alpha)
    v_tan = glide * wind_eff
    force = 0.5 * p.air_density * p.area * c_res * (1.0 + glide * glide) * wind_eff * wind_eff
    p_mech = force * v_reel
    p_pos = ad.smooth_pos(p_mech, p.power_blend)
    p_elec = p_pos * (p.eta_gen - 1.0 / p.eta_mot) + p_mech / p.eta_mot
    return height, cos_align, wind_eff, v_tan, force, p_mech, p_elec


def flow_state(p: SystemParams, x: KiteState, u: KiteControl) -> FlowState:
    """Flow state at a single point."""
    out = flow_quantities(p, np.float64(x.r), np.float64(x.beta), np.float64(x.phi),
                          np.float64(x.alpha), np.float64(u.v_reel))
    return FlowState(*(float(v) for v in out))


def state_rates(p: SystemParams, r, beta, phi, psi, alpha, u_steer, v_reel, u_trim):
    """Vectorized right-hand side of the state equations.

    Returns (dr, dbeta, dphi, dpsi, dalpha).  The heading rate includes the
    parallel-transport term dphi*sin(beta) that keeps turn geometry
    consistent on the sphere.  1/cos(beta) grows unbounded toward the
    zenith; the elevation box of the OCP keeps iterates away from it.
    """
    _, _, _, v_tan, _, _, _ = flow_quantities(p, r, beta, phi, alpha, v_reel)
    inv_r = 1.0 / r
    d_beta = v_tan * inv_r * ad.cos(psi)
    d_phi = v_tan * inv_r / ad.cos(beta) * ad.sin(psi)
    d_psi = p.steering_gain * v_tan * u_steer + d_phi * ad.sin(beta)
    d_r = v_reel
    d_alpha = u_trim
    # d_r/d_alpha may be plain floats when controls are constants; promote.
    if isinstance(d_beta, ad.Dual) and not isinstance(d_r, ad.Dual):
        d_r = ad.Dual(np.broadcast_to(ad.value(d_r), d_beta.val.shape).astype(float),
                      np.zeros(d_beta.dot.shape))
    if isinstance(d_beta, ad.Dual) and not isinstance(d_alpha, ad.Dual):
        d_alpha = ad.Dual(np.broadcast_to(ad.value(d_alpha), d_beta.val.shape).astype(float),
                          np.zeros(d_beta.dot.shape))
    return d_r, d_beta, d_phi, d_psi, d_alpha


def dynamics_rhs(p: SystemParams, x: KiteState, u: KiteControl) -> KiteState:
    """State rates at a single point, packed as a KiteState-shaped record."""
    rates = state_rates(p, np.float64(x.r), np.float64(x.beta), np.float64(x.phi),
                        np.float64(x.psi), np.float64(x.alpha),
                        np.float64(u.u_steer), np.float64(u.v_reel), np.float64(u.u_trim))
    return KiteState(*(float(v) for v in rates))


@dataclass(frozen=True)
class CycleEnergy:
    """Energy bookkeeping of one pumping cycle."""

    w_out: float       # generated electrical energy [J]
    w_in: float        # consumed electrical energy [J]
    t_cycle: float     # cycle duration [s]
    p_mean: float      # net mean electrical power [W]


def cycle_energy(t, p_elec) -> CycleEnergy:
    """Trapezoidal energy split of an electrical power trace.

    W_out integrates the positive part of the power, W_in the negative part,
    and the mean power is their difference over the cycle time.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p_elec, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need at least two time samples")
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("time grid must be strictly increasing")
    if p.shape != t.shape:
        raise ValueError("power trace must match the time grid")
    w_out = float(np.trapezoid(np.maximum(p, 0.0), t))
    w_in = float(np.trapezoid(np.maximum(-p, 0.0), t))
    t_cycle = float(t[-1] - t[0])
    return CycleEnergy(w_out, w_in, t_cycle, (w_out - w_in) / t_cycle)


def phase_labels(v_reel):
    """Reel-out/reel-in label per sample from the sign of the reel speed."""
    v = np.asarray(v_reel, dtype=float)
    return np.where(v > 0.0, "out", "in")


@dataclass
class CycleResult:
    """Optimized (or simulated) cycle trajectory with energy and residual report."""

    t: np.ndarray                  # node times [s], strictly increasing
    states: np.ndarray             # (n_nodes, 5) in STATE_NAMES order
    controls: np.ndarray           # (n_nodes, 3) in CONTROL_NAMES order
    force: np.ndarray              # tether force [N] per node
    p_elec: np.ndarray             # electrical power [W] per node
    wind_eff: np.ndarray           # effective wind [m/s] per node
    phase: np.ndarray              # "out"/"in" per node
    energy: CycleEnergy
    residuals: dict                # constraint name -> max violation (scaled)
    status: str
    iterations: int
    kkt_error: float
    objective: float               # solver objective at the solution (scaled)
    provenance: dict = field(default_factory=dict)

    @property
    def p_mean(self):
        return self.energy.p_mean

    @property
    def feasible(self):
        return self.max_violation <= 1.0e-6 and self.status in ("optimal", "acceptable")

    @property
    def max_violation(self):
        return max(self.residuals.values()) if self.residuals else 0.0

    def time_fraction(self, label):
        """Fraction of cycle time spent in a phase, by trapezoidal node weights."""
        w = np.zeros_like(self.t)
        dt = np.diff(self.t)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return float(w[self.phase == label].sum() / (self.t[-1] - self.t[0]))
