"""Static plot emission for optimized cycles.

Vector output only; rendering is a pure function of the trajectory table
(no display server).  Reel-out samples are drawn green, reel-in red, and
the figure-eight lobe count is embedded in the file metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .files import lobe_count  # noqa: E402


def _cartesian(table):
    r = table["r_m"]
    beta = table["beta_rad"]
    phi = table["phi_rad"]
    x = r * np.cos(beta) * np.cos(phi)
    y = r * np.cos(beta) * np.sin(phi)
    z = r * np.sin(beta)
    return x, y, z


def plot_cycle(table, out_path):
    """Trajectory and time-series panels for one cycle; returns metadata."""
    x, y, z = _cartesian(table)
    is_out = table["phase"] == "out"
    lobes = lobe_count(table)

    fig = plt.figure(figsize=(11, 7))
    ax3d = fig.add_subplot(2, 2, 1, projection="3d")
    for mask, color, label in ((is_out, "tab:green", "reel-out"),
                               (~is_out, "tab:red", "reel-in")):
        ax3d.scatter(x[mask], y[mask], z[mask], s=6, c=color, label=label,
                     depthshade=False)
    ax3d.set_xlabel("x [m]")
    ax3d.set_ylabel("y [m]")
    ax3d.set_zlabel("z [m]")
    ax3d.set_title(f"flight path ({lobes} lobes in reel-out)")
    ax3d.legend(loc="upper left", fontsize=8)

    t = table["t_s"]
    panels = [("r_m", "tether length [m]", 1.0),
              ("F_t_N", "tether force [kN]", 1e-3),
              ("P_elec_W", "electrical power [kW]", 1e-3),
              ("alpha", "trim [-]", 1.0)]
    for k, (col, label, scl) in enumerate(panels):
        ax = fig.add_subplot(4, 2, 2 * (k + 1))
        ax.plot(t[is_out], table[col][is_out] * scl, ".", ms=3, color="tab:green")
        ax.plot(t[~is_out], table[col][~is_out] * scl, ".", ms=3, color="tab:red")
        ax.set_ylabel(label, fontsize=8)
        ax.tick_params(labelsize=8)
        ax.grid(True, alpha=0.3)
        if k == len(panels) - 1:
            ax.set_xlabel("t [s]")
    fig.tight_layout()
    meta = {"Description": f"pumping-cycle trajectory; reel-out lobes={lobes}"}
    fig.savefig(out_path, format="svg", metadata=meta)
    plt.close(fig)
    return {"lobes": lobes, "n_out": int(is_out.sum()), "n_in": int((~is_out).sum())}


def plot_power_curve(rows, out_path):
    """Mean power versus wind speed."""
    winds = [r[0] for r in rows]
    power = [r[1] / 1e3 for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(winds, power, "o-")
    ax.set_xlabel("reference wind speed [m/s]")
    ax.set_ylabel("mean cycle power [kW]")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
