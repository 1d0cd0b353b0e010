"""Fixed-step RK4 replay of the kite model under given control schedules.

Open-loop integration is the independent consistency check of collocation
solutions: the optimizer's controls are replayed from the initial state and
the resulting path is compared with the collocation nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kite import SystemParams, flow_quantities, state_rates


class IntegrationError(RuntimeError):
    """State became non-finite during integration."""

    def __init__(self, message, t_abort):
        super().__init__(message)
        self.t_abort = t_abort


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-linear control trace over one cycle.

    Doubles as the exported set-point schedule: interpolation is exact at
    the nodes.
    """

    t: np.ndarray
    u: np.ndarray   # (n_samples, n_controls)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0.0):
            raise ValueError("schedule time grid must be strictly increasing")
        if u.shape[0] != t.size:
            raise ValueError("one control sample per time point required")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "u", u)

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def __call__(self, tq):
        tq = np.asarray(tq, dtype=float)
        return np.stack([np.interp(tq, self.t, self.u[:, j])
                         for j in range(self.u.shape[1])], axis=-1)


def rk4_integrate(f, x0, t_grid):
    """Classic fixed-step 4th-order integration of ``dx/dt = f(t, x)``.

    One step per grid interval; returns states at every grid point.  This
    generic hook is also the order-verification target for the integrator.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    out = np.empty((t_grid.size, x.size))
    out[0] = x
    for i in range(t_grid.size - 1):
        t, h = t_grid[i], t_grid[i + 1] - t_grid[i]
        k1 = np.asarray(f(t, x))
        k2 = np.asarray(f(t + 0.5 * h, x + 0.5 * h * k1))
        k3 = np.asarray(f(t + 0.5 * h, x + 0.5 * h * k2))
        k4 = np.asarray(f(t + h, x + h * k3))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at t={t_grid[i + 1]:.6g}",
                                   t_abort=float(t_grid[i + 1]))
        out[i + 1] = x
    return out


@dataclass
class SimTrajectory:
    t: np.ndarray
    states: np.ndarray          # (n_samples, 5)
    violations: dict            # constraint name -> worst violation (physical units)


def integrate(params: SystemParams, x0, schedule: ControlSchedule, h_step) -> SimTrajectory:
    """Integrate the kite dynamics under a control schedule.

    Dense output at multiples of ``h_step`` merged with the schedule nodes.
    Path-constraint violations along the way are flagged in the report, not
    raised; a non-finite state aborts with the offending time stamp.
    """
    if h_step <= 0.0:
        raise ValueError("step size must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    t0, t1 = schedule.t[0], schedule.t[-1]
    grid = np.unique(np.concatenate([np.arange(t0, t1, h_step), schedule.t]))

    def rhs(t, x):
        u = schedule(t)
        return np.array(state_rates(params, x[0], x[1], x[2], x[3], x[4],
                                    u[0], u[1], u[2]))

    states = rk4_integrate(rhs, x0, grid)
    u_all = schedule(grid)
    r, beta, phi, alpha = states[:, 0], states[:, 1], states[:, 2], states[:, 4]
    height, _, wind_eff, _, force, _, p_elec = flow_quantities(
        params, r, beta, phi, alpha, u_all[:, 1])
    violations = {
        "height": float(np.maximum(params.height_min - height, 0.0).max()),
        "force_hi": float(np.maximum(force - params.force_max, 0.0).max()),
        "force_lo": float(np.maximum(params.force_min - force, 0.0).max()),
        "power_cap": float(np.maximum(p_elec - params.power_rated, 0.0).max()),
        "effective_wind": float(np.maximum(params.wind_eff_min - wind_eff, 0.0).max()),
        "tether_box": float(np.maximum(np.maximum(params.tether_min - r,
                                                  r - params.tether_max), 0.0).max()),
    }
    return SimTrajectory(t=grid, states=states, violations=violations)


@dataclass
class ValidationReport:
    max_dev_scaled: float        # worst scaled state deviation at the nodes
    periodicity_gap_scaled: float
    p_mean_sim: float
    p_mean_opt: float
    p_mean_rel_err: float
    violations: dict

    def passed(self, dev_tol=0.05, p_tol=0.03):
        return self.max_dev_scaled < dev_tol and abs(self.p_mean_rel_err) < p_tol


def validate(result, params: SystemParams, h_step=None) -> ValidationReport:
    """Open-loop replay of a cycle result against its collocation nodes.

    State deviations are scaled by tether length (for r) and radians
    (for angles/trim).  The input result is never mutated.
    """
    t = result.t
    duration = float(t[-1] - t[0])
    if h_step is None:
        h_step = duration / 2000.0
    schedule = ControlSchedule(t, result.controls)
    sim = integrate(params, result.states[0], schedule, h_step)
    idx = np.searchsorted(sim.t, t)
    idx = np.clip(idx, 0, sim.t.size - 1)
    scales = np.array([params.tether_max, 1.0, 1.0, 1.0, 1.0])
    dev = np.abs(sim.states[idx] - result.states) / scales
    gap = np.abs(sim.states[-1] - sim.states[0]) / scales
    u_sim = schedule(sim.t)
    _, _, _, _, _, _, p_elec = flow_quantities(
        params, sim.states[:, 0], sim.states[:, 1], sim.states[:, 2],
        sim.states[:, 4], u_sim[:, 1])
    from .kite import cycle_energy
    energy = cycle_energy(sim.t, p_elec)
    p_opt = result.p_mean
    rel = (energy.p_mean - p_opt) / p_opt if p_opt != 0.0 else np.inf
    return ValidationReport(max_dev_scaled=float(dev.max()),
                            periodicity_gap_scaled=float(gap.max()),
                            p_mean_sim=energy.p_mean, p_mean_opt=p_opt,
                            p_mean_rel_err=float(rel), violations=sim.violations)
