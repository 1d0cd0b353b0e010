"""Result persistence: trajectory tables, summaries, power curves.

Plain comma-separated tables and YAML summaries, written with round-trip
float formatting so identical runs produce byte-identical files.  Wall-time
and other non-reproducible data live in a separate diagnostics section.
"""

from __future__ import annotations

import numpy as np
import yaml

from .kite import CycleResult, cycle_energy, phase_labels

TRAJECTORY_HEADER = ("t_s", "r_m", "beta_rad", "phi_rad", "psi_rad", "alpha",
                     "u_s", "v_reel_mps", "u_trim", "F_t_N", "P_elec_W", "phase")
POWER_CURVE_HEADER = ("w_mps", "P_mean_W", "status", "reelin_frac", "F_peak_N")


def _fmt(x):
    return repr(float(x))


def write_trajectory(path, result: CycleResult):
    """Trajectory table with one row per mesh node."""
    rows = []
    for i in range(result.t.size):
        rows.append(",".join(
            [_fmt(result.t[i])] + [_fmt(v) for v in result.states[i]]
            + [_fmt(v) for v in result.controls[i]]
            + [_fmt(result.force[i]), _fmt(result.p_elec[i]), str(result.phase[i])]))
    with open(path, "w") as fh:
        fh.write(",".join(TRAJECTORY_HEADER) + "\n")
        fh.write("\n".join(rows) + "\n")


def read_trajectory(path):
    """Columns of a trajectory table as a dict of arrays (phase as strings)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header in {path}")
        body = [line.strip().split(",") for line in fh if line.strip()]
    if not body:
        raise ValueError(f"empty trajectory table in {path}")
    cols = list(zip(*body))
    out = {name: np.array([float(v) for v in col])
           for name, col in zip(TRAJECTORY_HEADER[:-1], cols[:-1])}
    out["phase"] = np.array(cols[-1])
    if np.any(np.diff(out["t_s"]) <= 0.0):
        raise ValueError(f"non-increasing time grid in {path}")
    return out


def result_from_table(table) -> CycleResult:
    """Rebuild an in-memory cycle result from a trajectory table."""
    states = np.column_stack([table[k] for k in
                              ("r_m", "beta_rad", "phi_rad", "psi_rad", "alpha")])
    controls = np.column_stack([table[k] for k in ("u_s", "v_reel_mps", "u_trim")])
    energy = cycle_energy(table["t_s"], table["P_elec_W"])
    return CycleResult(t=table["t_s"], states=states, controls=controls,
                       force=table["F_t_N"], p_elec=table["P_elec_W"],
                       wind_eff=np.full_like(table["t_s"], np.nan),
                       phase=table["phase"], energy=energy, residuals={},
                       status="loaded", iterations=0, kkt_error=np.nan,
                       objective=np.nan)


def summary_dict(result: CycleResult, config_hash="", seeds=(), version="",
                 constraint_echo=None):
    """Reproducible summary of one optimized cycle."""
    return {
        "W_reel_out_J": float(result.energy.w_out),
        "W_reel_in_J": float(result.energy.w_in),
        "T_cycle_s": float(result.energy.t_cycle),
        "P_mean_W": float(result.p_mean),
        "status": str(result.status),
        "iterations": int(result.iterations),
        "kkt_error": float(result.kkt_error),
        "objective_scaled": float(result.objective),
        "reelin_time_fraction": float(result.time_fraction("in")),
        "force_peak_N": float(result.force.max()),
        "p_elec_max_W": float(result.p_elec.max()),
        "residuals": {k: float(v) for k, v in sorted(result.residuals.items())},
        "constraints": constraint_echo or [],
        "config_hash": config_hash,
        "seeds": [s if s is None else int(s) for s in seeds],
        "tool_version": version,
        "provenance": {k: (None if v is None else (float(v) if isinstance(v, float)
                                                   else v))
                       for k, v in sorted(result.provenance.items())},
    }


def write_summary(path, summary, diagnostics=None):
    """Summary file; the diagnostics section carries non-reproducible data."""
    doc = dict(summary)
    if diagnostics:
        doc["diagnostics"] = diagnostics
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=False)


def read_summary(path):
    with open(path) as fh:
        return yaml.safe_load(fh)


def write_power_curve(path, rows):
    """Power-curve table: (w, P_mean, status, reel-in fraction, peak force) rows."""
    with open(path, "w") as fh:
        fh.write(",".join(POWER_CURVE_HEADER) + "\n")
        for w, p_mean, status, frac, f_peak in rows:
            fh.write(f"{_fmt(w)},{_fmt(p_mean)},{status},{_fmt(frac)},{_fmt(f_peak)}\n")


def read_power_curve(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != POWER_CURVE_HEADER:
            raise ValueError(f"unexpected power-curve header in {path}")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            w, p, status, frac, fpk = line.strip().split(",")
            rows.append((float(w), float(p), status, float(frac), float(fpk)))
    return rows


def recompute_energy_from_table(table):
    """Independent energy recomputation used by round-trip checks."""
    return cycle_energy(table["t_s"], table["P_elec_W"])


def lobe_count(table):
    """Figure-eight lobes: half the azimuth zero-crossings while reeling out."""
    out_mask = table["phase"] == "out"
    phi = table["phi_rad"][out_mask]
    if phi.size < 3:
        return 0
    sgn = np.sign(phi[np.abs(phi) > 1e-9])
    crossings = int(np.sum(sgn[1:] != sgn[:-1]))
    return crossings // 2


def phase_fractions(table):
    """Trapezoidal time fractions of the reel-out and reel-in phases."""
    t = table["t_s"]
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    total = t[-1] - t[0]
    out_frac = float(w[table["phase"] == "out"].sum() / total)
    return out_frac, 1.0 - out_frac
