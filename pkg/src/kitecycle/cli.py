"""Command-line interface.

Subcommands: optimize (single wind speed, multi-start), sweep (power
curve), plot (static SVG from results), validate (open-loop replay check)
and sensitivity (central-difference parameter study).  Exit codes: 0 on a
feasible result, 2 when no feasible result exists, 1 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (canonical_yaml, config_hash, load_config, pilot_options,
                     plan_grid, system_params)
from .files import (lobe_count, phase_fractions, read_trajectory,
                    result_from_table, summary_dict, write_power_curve,
                    write_summary, write_trajectory)
from .ocp import ConfigurationError, build_ocp
from .pilot import MultiStartError, multi_start, sensitivity, sweep


def _out_dir(args):
    base = args.out or os.environ.get("KITECYCLE_OUT", ".")
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args):
    cfg = load_config(args.config)
    params = system_params(cfg)
    opts = pilot_options(cfg)
    if getattr(args, "n_intervals", None):
        if args.n_intervals < 10:
            raise ConfigurationError("--n-intervals must be at least 10")
        opts = opts.replace(n_intervals=args.n_intervals)
    if getattr(args, "starts", None):
        opts = opts.replace(starts=args.starts)
    if getattr(args, "verbose", False):
        opts = opts.replace(solver=opts.solver.replace(verbose=True))
    return cfg, params, opts


def _seed_list(cfg, args, k):
    if getattr(args, "seed", None) is not None:
        return [None] + [args.seed + i for i in range(k - 1)]
    seeds = cfg["plan"]["seeds"]
    if seeds is not None:
        return list(seeds)
    return [None] + list(range(1, k))


def cmd_optimize(args):
    cfg, params, opts = _load(args)
    wind = args.wind if args.wind is not None else cfg["plan"]["wind_mps"]
    out = _out_dir(args)
    k = opts.starts
    seeds = _seed_list(cfg, args, k)
    t0 = time.perf_counter()
    try:
        best, _, results = multi_start(params, wind, k, seeds=seeds, opts=opts)
    except MultiStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for diag in exc.diagnostics:
            print(f"  start seed={diag['seed']}: {diag['status']} "
                  f"kkt={diag['kkt']:.2e} viol={diag['max_violation']:.2e}",
                  file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    write_trajectory(out / "trajectory.csv", best)
    problem = build_ocp(params.replace(wind=params.wind.replace_ref(wind)), opts.ocp)
    summary = summary_dict(best, config_hash=config_hash(cfg), seeds=seeds,
                           version=__version__,
                           constraint_echo=problem.constraint_summary())
    write_summary(out / "summary.yaml", summary,
                  diagnostics={"wall_time_s": wall,
                               "starts": [{"seed": r.provenance.get("seed"),
                                           "status": r.status,
                                           "P_mean_W": float(r.p_mean)}
                                          for r in results]})
    (out / "config.echo.yaml").write_text(canonical_yaml(cfg))
    with open(out / "iterations.log", "w") as fh:
        fh.write(f"best start: seed={best.provenance.get('seed')} "
                 f"iterations={best.iterations} kkt={best.kkt_error:.3e}\n")
        for r in results:
            fh.write(f"seed={r.provenance.get('seed')} status={r.status} "
                     f"iterations={r.iterations} P_mean_W={r.p_mean!r}\n")
    print(f"P_mean = {best.p_mean / 1e3:.2f} kW  status={best.status}  "
          f"({wall:.1f} s)", file=sys.stderr)
    return 0


def cmd_sweep(args):
    cfg, params, opts = _load(args)
    out = _out_dir(args)
    if args.grid:
        try:
            lo, hi, step = (float(v) for v in args.grid.split(":"))
        except ValueError:
            print(f"error: malformed grid {args.grid!r}; expected lo:hi:step",
                  file=sys.stderr)
            return 1
        if step <= 0 or hi < lo:
            print("error: grid must ascend with positive step", file=sys.stderr)
            return 1
        n = int(round((hi - lo) / step))
        winds = [lo + i * step for i in range(n + 1) if lo + i * step <= hi + 1e-9]
    else:
        winds = plan_grid(cfg)
    curve = sweep(winds, params, opts, continuation=cfg["plan"]["continuation"])
    write_power_curve(out / "power_curve.csv", curve.as_rows())
    for pt in curve.points:
        if pt.feasible and pt.result is not None:
            write_trajectory(out / f"trajectory_w{pt.wind:05.1f}.csv", pt.result)
            summary = summary_dict(pt.result, config_hash=config_hash(cfg),
                                   seeds=_seed_list(cfg, args, opts.starts),
                                   version=__version__)
            write_summary(out / f"summary_w{pt.wind:05.1f}.yaml", summary)
    (out / "config.echo.yaml").write_text(canonical_yaml(cfg))
    n_ok = len(curve.feasible_points())
    print(f"sweep finished: {n_ok}/{len(curve.points)} feasible points",
          file=sys.stderr)
    return 0 if n_ok else 2


def cmd_plot(args):
    from .plots import plot_cycle, plot_power_curve
    result_dir = Path(args.result_dir)
    traj = result_dir / "trajectory.csv"
    if not traj.exists():
        candidates = sorted(result_dir.glob("trajectory_w*.csv"))
        if not candidates:
            print(f"error: no trajectory table under {result_dir}", file=sys.stderr)
            return 1
        traj = candidates[0]
    try:
        table = read_trajectory(traj)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_file = Path(args.out_file) if args.out_file else result_dir / "trajectory.svg"
    meta = plot_cycle(table, out_file)
    curve_file = result_dir / "power_curve.csv"
    if curve_file.exists():
        from .files import read_power_curve
        plot_power_curve(read_power_curve(curve_file),
                         out_file.with_name("power_curve.svg"))
    print(f"wrote {out_file} (lobes={meta['lobes']}, out/in samples "
          f"{meta['n_out']}/{meta['n_in']})", file=sys.stderr)
    return 0


def cmd_validate(args):
    from .simulate import validate
    cfg, params, opts = _load(args)
    result_dir = Path(args.result_dir)
    try:
        table = read_trajectory(result_dir / "trajectory.csv")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = result_from_table(table)
    wind = args.wind if args.wind is not None else result_guess_wind(table, cfg)
    params_w = params.replace(wind=params.wind.replace_ref(wind))
    report = validate(result, params_w)
    lines = [
        f"max_dev_scaled: {report.max_dev_scaled!r}",
        f"periodicity_gap_scaled: {report.periodicity_gap_scaled!r}",
        f"P_mean_optimizer_W: {report.p_mean_opt!r}",
        f"P_mean_replay_W: {report.p_mean_sim!r}",
        f"P_mean_rel_err: {report.p_mean_rel_err!r}",
        f"passed: {report.passed()}",
    ]
    text = "\n".join(lines) + "\n"
    (result_dir / "validation.txt").write_text(text)
    print(text, end="", file=sys.stderr)
    return 0 if report.passed() else 2


def result_guess_wind(table, cfg):
    return cfg["plan"]["wind_mps"]


def cmd_sensitivity(args):
    cfg, params, opts = _load(args)
    wind = args.wind if args.wind is not None else cfg["plan"]["wind_mps"]
    names = [n.strip() for n in args.params.split(",") if n.strip()]
    if not names:
        print("error: no parameter names given", file=sys.stderr)
        return 1
    rel_step = args.rel_step if args.rel_step is not None \
        else cfg["plan"]["sensitivity_rel_step"]
    out = _out_dir(args)
    try:
        base, entries = sensitivity(params, wind, names, rel_step=rel_step, opts=opts)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MultiStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    header = ("parameter,base_value,P_mean_minus_W,P_mean_plus_W,"
              "dP_mean_dparam_W_per_unit,available")
    rows = [header]
    for e in entries:
        rows.append(f"{e.name},{e.base_value!r},{e.p_mean_minus!r},"
                    f"{e.p_mean_plus!r},{e.derivative!r},{e.available}")
    text = "\n".join(rows) + "\n"
    (out / "sensitivity.csv").write_text(text)
    print(text, end="", file=sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kitecycle",
        description="Trajectory optimization for pumping-cycle kite power systems")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, wind=True):
        sp.add_argument("config", nargs="?", default=None,
                        help="configuration file (defaults apply when omitted)")
        sp.add_argument("--out", default=None, help="output directory "
                        "(default: $KITECYCLE_OUT or current directory)")
        sp.add_argument("--n-intervals", type=int, default=None,
                        help="collocation intervals, overrides mesh.n_intervals")
        sp.add_argument("--verbose", action="store_true",
                        help="stream solver iterations to stderr")
        if wind:
            sp.add_argument("--wind", type=float, default=None,
                            help="reference wind speed [m/s], overrides plan.wind_mps")

    sp = sub.add_parser("optimize", help="optimize one cycle at a wind speed")
    common(sp)
    sp.add_argument("--starts", type=int, default=None,
                    help="multi-start count, overrides plan.starts")
    sp.add_argument("--seed", type=int, default=None,
                    help="base perturbation seed for starts 2..K")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="optimize across a wind grid")
    common(sp, wind=False)
    sp.add_argument("--grid", default=None, help="wind grid lo:hi:step [m/s]")
    sp.add_argument("--starts", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("plot", help="emit SVG plots from a result directory")
    sp.add_argument("result_dir")
    sp.add_argument("--out", dest="out_file", default=None, help="output SVG path")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("validate", help="open-loop replay check of a result")
    common(sp)
    sp.add_argument("--result", dest="result_dir", required=True,
                    help="directory holding trajectory.csv")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("sensitivity", help="parameter sensitivities of mean power")
    common(sp)
    sp.add_argument("--params", required=True,
                    help="comma-separated parameter names, e.g. area,force_max")
    sp.add_argument("--rel-step", type=float, default=None)
    sp.add_argument("--starts", type=int, default=None)
    sp.set_defaults(func=cmd_sensitivity)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
