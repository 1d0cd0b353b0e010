"""Synthetic wind-speed-dependent initial trajectory guesses.

The reel-out segment traces Lissajous figure-eights at moderate elevation
with reel speed at a third of the local wind alignment (the analytic
crosswind optimum); the reel-in segment retracts at high elevation with the
kite depowered.  The construction closes periodically by design and
respects every variable bound, so only collocation defects and path
inequalities remain for the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collocate import CollocationNlp
from .kite import SystemParams, flow_quantities
from .ocp import ConfigurationError
from .simulate import ControlSchedule, integrate


@dataclass(frozen=True)
class GuessRecipe:
    """Shape parameters of the synthetic cycle.

    The reel-out fraction is an upper cap: when winch-speed limits cannot
    absorb the reel-out stroke in the remaining time, the split is
    rebalanced so the tether stroke closes without gross force violations.
    """

    n_eights: int = None            # None: wind-dependent default
    beta_center: float = math.radians(30.0)
    beta_amp: float = math.radians(6.0)
    phi_amp: float = math.radians(25.0)
    beta_high: float = math.radians(75.0)
    reel_out_fraction: float = 0.75
    trim_out: float = 1.0
    trim_in: float = 0.0
    ramp_fraction: float = 0.06     # trim/reel blend width as cycle fraction
    force_target: float = 0.7       # guess flies at this fraction of force_max
    t_base: float = 220.0           # guessed cycle time at the reference wind
    t_slope: float = 10.0           # seconds less per m/s above the reference
    w_base: float = 8.0

    def eights_for(self, w_ref):
        if self.n_eights is not None:
            return max(1, int(self.n_eights))
        return max(2, round(8.0 * self.w_base / max(w_ref, 1e-6)))

    def cycle_time_for(self, w_ref, t_bounds):
        t = self.t_base - self.t_slope * (w_ref - self.w_base)
        margin = 0.02 * (t_bounds[1] - t_bounds[0])
        return float(np.clip(t, t_bounds[0] + margin, t_bounds[1] - margin))


def _smooth_gate(x, lo, hi, ramp):
    """0 outside [lo, hi], 1 inside, cosine ramps of width ramp at the edges."""
    up = np.clip((x - lo) / ramp, 0.0, 1.0)
    dn = np.clip((hi - x) / ramp, 0.0, 1.0)
    return 0.5 * (1 - np.cos(np.pi * up)) * 0.5 * (1 - np.cos(np.pi * dn))


def synth_guess(nlp: CollocationNlp, w_ref, recipe: GuessRecipe = GuessRecipe()):
    """Decision vector for a transcribed pumping-cycle problem.

    Construction stages: geometry (figure-eights at a wind-adaptive center
    elevation, high-elevation retraction), trim schedule, reel speed
    consistent with a tether-force target at the local trim (shedding
    excess power on the fast-reel branch), then a trim-level bisection that
    closes the tether stroke.  Periodicity of the result is exact and all
    variable bounds hold by construction.
    """
    pr = nlp.problem
    p: SystemParams = pr.params
    if p is None or pr.n_states != 5:
        raise ConfigurationError("synthetic guess requires the pumping-cycle problem")
    from .atmosphere import force_factor, wind_speed

    beta_lo_box, beta_hi_box = pr.x_lb[1], pr.x_ub[1]
    phi_hi_box = pr.x_ub[2]
    if recipe.phi_amp >= phi_hi_box:
        raise ConfigurationError("figure-eight azimuth amplitude exceeds the azimuth box")
    if recipe.beta_center - recipe.beta_amp <= beta_lo_box:
        raise ConfigurationError("figure-eight elevation amplitude leaves the elevation box")
    beta_high = min(recipe.beta_high, beta_hi_box - math.radians(2.0))
    tau = nlp.mesh.tau
    nn = tau.size
    t_cycle = recipe.cycle_time_for(w_ref, pr.t_bounds)
    # an eight needs a handful of reel-out nodes to be representable
    n_eights = min(recipe.eights_for(w_ref), max(1, (nn - 1) // 14))
    w_quad = nlp.mesh.quad_weights()
    wind = p.wind.replace_ref(w_ref)
    half_rho_a = 0.5 * p.air_density * p.area
    ff_out = float(force_factor(p.aero, recipe.trim_out))
    ff_in = float(force_factor(p.aero, recipe.trim_in))
    f_tgt_out = recipe.force_target * p.force_max
    f_tgt_in = min(0.92, recipe.force_target + 0.15) * p.force_max
    w_eff_out = math.sqrt(f_tgt_out / (half_rho_a * ff_out))
    w_eff_in = math.sqrt(f_tgt_in / (half_rho_a * ff_in))
    r_mid = 0.5 * (p.tether_min + p.tether_max)
    p_tgt_mech = 0.85 * p.power_rated / p.eta_gen

    # center elevation: shed wind geometrically once the winch and the
    # rated power can no longer digest the local wind at full trim
    s_mid = float(wind_speed(wind, r_mid * math.sin(recipe.beta_center))) / w_ref
    v_digest = w_eff_out + min(0.85 * p.reel_max, p_tgt_mech / f_tgt_out)
    cos_need = min(1.0, v_digest / max(w_ref * s_mid, 1e-9))
    beta_c = float(np.clip(math.acos(cos_need), recipe.beta_center,
                           math.radians(66.0)))
    beta_amp = min(recipe.beta_amp, 0.45 * (beta_high - beta_c))

    # phase split from speed capacities (refined by the closure bisection)
    w_loc_in = float(wind_speed(wind, r_mid * math.sin(beta_high))) * math.cos(beta_high)
    v_in_cap = min(0.9 * (-p.reel_min), max(w_eff_in - w_loc_in, 0.3))
    w_loc_out_est = w_ref * s_mid * math.cos(beta_c) * math.cos(0.5 * recipe.phi_amp)
    v_out_est = float(np.clip(w_loc_out_est - w_eff_out, w_loc_out_est / 3.0,
                              0.9 * p.reel_max))
    f_out = float(np.clip(min(recipe.reel_out_fraction,
                              0.55 * v_in_cap / max(v_out_est + 0.55 * v_in_cap, 1e-9)),
                          0.22, 0.85))

    out = tau <= f_out
    theta = 2.0 * np.pi * n_eights * np.clip(tau / f_out, 0.0, 1.0)
    s_in = np.clip((tau - f_out) / (1.0 - f_out), 0.0, 1.0)
    beta = np.where(out, beta_c + beta_amp * np.sin(theta),
                    beta_c + (beta_high - beta_c) * np.sin(np.pi * s_in) ** 2)
    phi = np.where(out, recipe.phi_amp * np.sin(2.0 * theta), 0.0)
    r_ramp = max(recipe.ramp_fraction / max(1.0 - f_out, recipe.ramp_fraction), 0.06)
    gate = np.where(out, 0.0, _smooth_gate(s_in, 0.04, 0.96, r_ramp))

    def build(w_loc, trim_level):
        """Trim schedule and force/power-consistent reel speed."""
        alpha = np.clip(trim_level * (1.0 - gate) + recipe.trim_in * gate,
                        pr.x_lb[4], pr.x_ub[4])
        ff_a = np.array([float(force_factor(p.aero, a)) for a in alpha])
        k_node = half_rho_a * ff_a
        f_node = np.where(gate > 0.5, f_tgt_in, f_tgt_out)
        w_allow = np.sqrt(f_node / k_node)
        v = w_loc - w_allow
        floor = np.where(out & (alpha > 0.9), w_loc / 3.0, 0.95 * p.reel_min)
        v = np.maximum(v, floor)
        over = (v > 0.0) & (k_node * (w_loc - v) ** 2 * v > p_tgt_mech)
        if np.any(over):
            v_lo_b, v_hi_b = v[over], w_loc[over]
            for _ in range(40):
                v_m = 0.5 * (v_lo_b + v_hi_b)
                hot = k_node[over] * (w_loc[over] - v_m) ** 2 * v_m > p_tgt_mech
                v_lo_b = np.where(hot, v_m, v_lo_b)
                v_hi_b = np.where(hot, v_hi_b, v_m)
            v[over] = 0.5 * (v_lo_b + v_hi_b)
        v = np.clip(v, 0.95 * p.reel_min, 0.95 * p.reel_max)
        return alpha, v

    def imbalance(v):
        return float((w_quad * v).sum())

    def integrate_stroke(v_reel):
        r = np.empty(nn)
        margin = 0.04 * (p.tether_max - p.tether_min)
        r[0] = p.tether_min + margin
        dr = 0.5 * np.diff(tau) * (v_reel[:-1] + v_reel[1:]) * t_cycle
        r[1:] = r[0] + np.cumsum(dr)
        span = r.max() - r.min()
        avail = (p.tether_max - p.tether_min) - 2.0 * margin
        if span > avail:
            v_reel = v_reel * (avail / span)
            dr = 0.5 * np.diff(tau) * (v_reel[:-1] + v_reel[1:]) * t_cycle
            r[1:] = r[0] + np.cumsum(dr)
        r += (p.tether_min + margin) - r.min()
        min_sin = np.sin(beta).min()
        r_floor = p.height_min / max(min_sin, 1e-6) + 2.0
        if r.min() < r_floor:
            r += r_floor - r.min()
        return np.clip(r, p.tether_min + 1.0, p.tether_max - 1.0), v_reel

    # two passes: the second re-evaluates the shear profile on the real
    # height trace so force/power targets hold at the integrated stroke
    r_est = np.full(nn, r_mid)
    for _ in range(2):
        w_loc = np.asarray(wind_speed(wind, r_est * np.sin(beta))) \
            * np.cos(beta) * np.cos(phi)
        alpha, v_reel = build(w_loc, recipe.trim_out)
        if imbalance(v_reel) > 0.0:
            # stroke cannot be returned in time: depower the pay-out phase
            lo_t, hi_t = 0.02, recipe.trim_out
            for _ in range(40):
                mid = 0.5 * (lo_t + hi_t)
                _, v_m = build(w_loc, mid)
                if imbalance(v_m) > 0.0:
                    hi_t = mid
                else:
                    lo_t = mid
            alpha, v_reel = build(w_loc, lo_t)
        res = imbalance(v_reel)
        neg = v_reel < 0.0
        in_int = float(-(w_quad[neg] * v_reel[neg]).sum())
        if in_int > 1e-9 and res < 0.0:
            # retraction overshoots: shrinking it is force-safe
            v_reel[neg] *= (in_int + res) / in_int
        v_reel -= float((w_quad * v_reel).sum())
        v_reel = np.clip(v_reel, 0.98 * p.reel_min, 0.98 * p.reel_max)
        r, v_reel = integrate_stroke(v_reel)
        r_est = r

    # heading from the path tangent on a fine parameter grid (the node grid
    # undersamples tight eights); the net tangent winding is removed with a
    # smooth mid-retraction twist so the heading closes periodically
    n_fine = max(400, 40 * n_eights)
    tau_f = np.linspace(0.0, 1.0, n_fine + 1)
    out_f = tau_f <= f_out
    theta_f = 2.0 * np.pi * n_eights * np.clip(tau_f / f_out, 0.0, 1.0)
    s_in_f = np.clip((tau_f - f_out) / (1.0 - f_out), 0.0, 1.0)
    beta_f = np.where(out_f, beta_c + beta_amp * np.sin(theta_f),
                      beta_c + (beta_high - beta_c) * np.sin(np.pi * s_in_f) ** 2)
    phi_f = np.where(out_f, recipe.phi_amp * np.sin(2.0 * theta_f), 0.0)
    db_f = np.gradient(beta_f, tau_f)
    dp_f = np.gradient(phi_f, tau_f)
    ok = np.hypot(db_f, dp_f) > 1e-9
    ang = np.arctan2(dp_f * np.cos(beta_f), db_f)
    if not ok.all():
        ang[~ok] = np.interp(tau_f[~ok], tau_f[ok], ang[ok])
    psi_f = np.unwrap(ang)
    winding = psi_f[-1] - psi_f[0]
    twist_lo = f_out + 0.15 * (1.0 - f_out)
    twist_hi = f_out + 0.85 * (1.0 - f_out)
    ramp_t = np.clip((tau_f - twist_lo) / (twist_hi - twist_lo), 0.0, 1.0)
    psi_f = psi_f - winding * 0.5 * (1.0 - np.cos(np.pi * ramp_t))
    psi_f -= np.mean(psi_f)  # center inside the heading box
    psi = np.interp(tau, tau_f, psi_f)

    # steering consistent with the heading rate where meaningful
    _, _, wind_eff, v_tan, _, _, _ = flow_quantities(p, r, beta, phi, alpha, v_reel)
    dpsi_dt = np.gradient(psi, tau) / t_cycle
    dphi_dt = np.gradient(phi, tau) / t_cycle
    denom = p.steering_gain * np.where(np.abs(v_tan) < 0.5, 0.5, v_tan)
    u_steer = np.clip((dpsi_dt - dphi_dt * np.sin(beta)) / denom, -0.95, 0.95)

    dalpha_dt = np.gradient(alpha, tau) / t_cycle
    u_trim = np.clip(dalpha_dt, -0.95 * p.trim_rate_max, 0.95 * p.trim_rate_max)

    states = np.column_stack([r, beta, phi, psi, alpha])
    controls = np.column_stack([u_steer, v_reel, u_trim])
    states[-1] = states[0]   # exact periodicity of the guess
    sc = pr.scaling
    return nlp.layout.pack(states / sc.x, controls / sc.u,
                           t_cycle / sc.t if nlp.layout.free_t else None,
                           np.zeros(nlp.layout.n_slack))


def perturb(nlp: CollocationNlp, z0, seed, magnitude):
    """Deterministic pseudo-random perturbation of controls and cycle time.

    States are re-derived by forward simulation of the perturbed controls
    and re-closed to exact periodicity by a linear blend; bounds are
    re-imposed afterwards.  Magnitude is in scaled decision units, up to 0.2.
    """
    if not 0.0 <= magnitude <= 0.2:
        raise ValueError("perturbation magnitude must lie in [0, 0.2]")
    z0 = np.asarray(z0, dtype=float)
    if magnitude == 0.0:
        return z0.copy()
    pr = nlp.problem
    p = pr.params
    lay = nlp.layout
    sc = pr.scaling
    rng = np.random.default_rng(seed)
    x_hat, u_hat, t_hat, _ = lay.split(z0)
    nn = lay.n_nodes
    noise = rng.standard_normal((nn, lay.n_u))
    # low-pass the noise so the perturbed controls stay integrable
    win = max(3, nn // 20)
    kernel = np.ones(win) / win
    for j in range(lay.n_u):
        noise[:, j] = np.convolve(np.concatenate([noise[:, j]] * 3),
                                  kernel, mode="same")[nn: 2 * nn]
    u_new = u_hat + magnitude * noise
    lb_u = nlp.lb[lay.u_offset:lay.u_offset + nn * lay.n_u].reshape(nn, lay.n_u)
    ub_u = nlp.ub[lay.u_offset:lay.u_offset + nn * lay.n_u].reshape(nn, lay.n_u)
    width = np.where(np.isfinite(ub_u - lb_u), ub_u - lb_u, 2.0)
    u_new = np.clip(u_new, lb_u + 1e-3 * width, ub_u - 1e-3 * width)
    if lay.free_t:
        t_lo, t_hi = pr.t_bounds[0] / sc.t, pr.t_bounds[1] / sc.t
        t_new = float(np.clip(t_hat + 0.25 * magnitude * rng.standard_normal(),
                              t_lo + 0.02 * (t_hi - t_lo), t_hi - 0.02 * (t_hi - t_lo)))
        t_cycle = t_new * sc.t
    else:
        t_new, t_cycle = None, pr.t_fixed
    # tether stroke must still close over the cycle
    w_quad = nlp.mesh.quad_weights()
    j_reel = pr.control_names.index("v_reel")
    u_new[:, j_reel] -= (w_quad * u_new[:, j_reel]).sum()

    controls = u_new * sc.u
    x0 = x_hat[0] * sc.x
    states = x_hat * sc.x
    if p is not None and lay.n_x == 5:
        schedule = ControlSchedule(nlp.mesh.tau * t_cycle, controls)
        try:
            sim = integrate(p, x0, schedule, t_cycle / (4 * nn))
            idx = np.clip(np.searchsorted(sim.t, nlp.mesh.tau * t_cycle),
                          0, sim.t.size - 1)
            states = sim.states[idx]
        except Exception:  # noqa: BLE001 - keep the unsimulated states
            states = x_hat * sc.x
        # re-close to periodicity with a linear blend, then re-box
        gap = states[-1] - states[0]
        states = states - np.outer(nlp.mesh.tau, gap)
        width = np.where(np.isfinite(pr.x_ub - pr.x_lb), pr.x_ub - pr.x_lb, 2.0)
        states = np.clip(states, pr.x_lb + 1e-6 * width, pr.x_ub - 1e-6 * width)
        states[-1] = states[0]
    return lay.pack(states / sc.x, u_new, t_new, np.zeros(lay.n_slack))
