"""Orchestration: multi-start globalization, wind sweeps and sensitivities.

Everything here is deterministic given the seed list: starts run
sequentially in seed order and results are aggregated by declared keys, so
repeated runs produce identical outputs.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .collocate import Mesh, extract, transcribe
from .guess import GuessRecipe, perturb, synth_guess
from .ipm import NlpSolution, SolverOptions, solve, warm_solve
from .kite import CycleResult, SystemParams
from .ocp import ConfigurationError, OcpOptions, build_ocp, scale


class MultiStartError(RuntimeError):
    """Every start failed; carries per-start diagnostics."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PilotOptions:
    """Pipeline settings shared by single solves, sweeps and sensitivities."""

    n_intervals: int = 120
    starts: int = 5
    perturb_magnitude: float = 0.05
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(
        max_iter=1500, mu_init=1.0e-2))
    ocp: OcpOptions = field(default_factory=OcpOptions)
    recipe: GuessRecipe = field(default_factory=GuessRecipe)
    refresh_every: int = 3      # multi-start refresh cadence along the sweep
    feas_tol: float = 1.0e-6

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass
class PowerCurvePoint:
    wind: float
    p_mean: float
    status: str
    reelin_frac: float
    force_peak: float
    feasible: bool
    provenance: dict
    result: CycleResult = None


@dataclass
class PowerCurve:
    points: list

    def feasible_points(self):
        return [pt for pt in self.points if pt.feasible]

    def as_rows(self):
        """Tabular rows (wind ascending) for the power-curve file."""
        return [(pt.wind, pt.p_mean, pt.status, pt.reelin_frac, pt.force_peak)
                for pt in sorted(self.points, key=lambda q: q.wind)]


def _pipeline(params: SystemParams, w_ref, opts: PilotOptions):
    """Problem assembly shared by every solve at one wind speed."""
    params_w = params.replace(wind=params.wind.replace_ref(w_ref))
    problem, scaling = scale(build_ocp(params_w, opts.ocp))
    nlp = transcribe(problem, Mesh(opts.n_intervals))
    return params_w, nlp, scaling


def _finish(nlp, sol: NlpSolution, provenance) -> CycleResult:
    result = extract(nlp, sol.z, provenance=provenance)
    result.status = sol.status
    result.iterations = sol.iterations
    result.kkt_error = float(sol.kkt_error.get("overall", np.nan))
    return result


def optimize_once(params: SystemParams, w_ref, opts: PilotOptions = PilotOptions(),
                  seed=None, warm_from: NlpSolution = None):
    """One full solve: build, scale, transcribe, guess, solve, extract.

    Returns (CycleResult, NlpSolution).  A perturbation seed shifts the
    synthetic guess; a prior solution switches to a warm start.  Failures
    are reported through the result's status, never as a feasible label.
    """
    _, nlp, _ = _pipeline(params, w_ref, opts)
    if warm_from is not None:
        sol = warm_solve(nlp, warm_from, opts.solver)
    else:
        z0 = synth_guess(nlp, w_ref, opts.recipe)
        if seed is not None:
            z0 = perturb(nlp, z0, seed, opts.perturb_magnitude)
        sol = solve(nlp, z0, opts.solver)
    prov = {"wind": float(w_ref), "seed": seed, "n_intervals": opts.n_intervals,
            "warm": warm_from is not None}
    result = _finish(nlp, sol, prov)
    if result.max_violation > opts.feas_tol and sol.status in ("optimal", "acceptable"):
        result.status = "infeasible"
    return result, sol


def multi_start(params: SystemParams, w_ref, k, seeds=None,
                opts: PilotOptions = PilotOptions()):
    """Best-of-k independent solves from perturbed guesses.

    Start i uses seeds[i]; a None seed means the unperturbed guess.  The
    best feasible result by mean power wins; ties break on lower peak
    tether force.  Deterministic for a fixed seed list.
    """
    if k < 1:
        raise ConfigurationError("need at least one start")
    if seeds is None:
        seeds = [None] + list(range(1, k))
    seeds = list(seeds)[:k]
    if len(seeds) < k:
        seeds += list(range(len(seeds), k))
    results = []
    solutions = []
    for seed in seeds:
        result, sol = optimize_once(params, w_ref, opts, seed=seed)
        results.append(result)
        solutions.append(sol)
    feasible = [(r, s) for r, s in zip(results, solutions) if r.feasible]
    if not feasible:
        diag = [{"seed": r.provenance.get("seed"), "status": r.status,
                 "kkt": r.kkt_error, "max_violation": r.max_violation}
                for r in results]
        raise MultiStartError(f"all {k} starts failed at w={w_ref}", diag)
    best = min(feasible, key=lambda rs: (-rs[0].p_mean, rs[0].force.max()))
    return best[0], best[1], results


def sweep(plan_winds, params: SystemParams, opts: PilotOptions = PilotOptions(),
          continuation=True, log=None) -> PowerCurve:
    """Power curve over an ascending wind grid.

    With continuation on, each speed warm-starts from the previous optimum,
    refreshed by a full multi-start every few grid points; per-point
    failures are recorded and the sweep continues.
    """
    winds = [float(w) for w in plan_winds]
    if any(b <= a for a, b in zip(winds, winds[1:])):
        raise ConfigurationError("wind grid must be strictly increasing")
    points = []
    prior = None
    log = log if log is not None else sys.stderr
    for idx, w in enumerate(winds):
        refresh = (idx % max(opts.refresh_every, 1) == 0) or prior is None
        try:
            candidates = []
            if prior is not None and continuation:
                result, sol = optimize_once(params, w, opts, warm_from=prior)
                if result.feasible:
                    candidates.append((result, sol))
            if refresh or not candidates:
                result, sol, _ = multi_start(params, w, opts.starts, opts=opts)
                candidates.append((result, sol))
            result, sol = min(candidates,
                              key=lambda rs: (-rs[0].p_mean, rs[0].force.max()))
            prior = sol
            points.append(PowerCurvePoint(
                wind=w, p_mean=result.p_mean, status=result.status,
                reelin_frac=result.time_fraction("in"),
                force_peak=float(result.force.max()), feasible=result.feasible,
                provenance=result.provenance, result=result))
            print(f"sweep w={w:5.1f} m/s  P={result.p_mean / 1e3:8.2f} kW  "
                  f"{result.status}", file=log)
        except MultiStartError as exc:
            points.append(PowerCurvePoint(
                wind=w, p_mean=float("nan"), status="failed", reelin_frac=float("nan"),
                force_peak=float("nan"), feasible=False,
                provenance={"diagnostics": exc.diagnostics}))
            print(f"sweep w={w:5.1f} m/s  failed: {exc}", file=log)
    return PowerCurve(points=points)


def _param_value(params, name):
    obj = params
    for part in name.split("."):
        if not hasattr(obj, part):
            raise ConfigurationError(f"unknown parameter {name!r}")
        obj = getattr(obj, part)
    if not isinstance(obj, (int, float)):
        raise ConfigurationError(f"parameter {name!r} is not numeric")
    return float(obj)


def _param_replace(obj, name, value):
    """Dataclass copy with a (possibly dotted) numeric field replaced."""
    from dataclasses import replace as _dc_replace
    head, _, rest = name.partition(".")
    if rest:
        return _dc_replace(obj, **{head: _param_replace(getattr(obj, head), rest, value)})
    return _dc_replace(obj, **{head: value})


@dataclass
class SensitivityEntry:
    name: str
    base_value: float
    p_mean_minus: float
    p_mean_plus: float
    derivative: float
    available: bool


def sensitivity(params: SystemParams, w_ref, param_names, rel_step=0.02,
                opts: PilotOptions = PilotOptions()):
    """Central-difference sensitivities of optimized mean power.

    Each named parameter is bumped by +-rel_step (relative) and the cycle
    re-optimized warm from the base optimum; a failed re-optimization marks
    the entry unavailable instead of failing the table.
    """
    if rel_step <= 0.0:
        raise ConfigurationError("sensitivity step must be positive")
    base_result, base_sol, _ = multi_start(params, w_ref, opts.starts, opts=opts)
    entries = []
    for name in param_names:
        base = _param_value(params, name)
        if base == 0.0:
            raise ConfigurationError(f"parameter {name!r} is zero; relative step undefined")
        delta = rel_step * abs(base)
        values = []
        ok = True
        for sign in (-1.0, 1.0):
            try:
                p_mod = _param_replace(params, name, base + sign * delta)
                result, _ = optimize_once(p_mod, w_ref, opts, warm_from=base_sol)
                if not result.feasible:
                    ok = False
                values.append(result.p_mean)
            except Exception:  # noqa: BLE001 - entry marked unavailable
                ok = False
                values.append(float("nan"))
        deriv = (values[1] - values[0]) / (2.0 * delta) if ok else float("nan")
        entries.append(SensitivityEntry(name=name, base_value=base,
                                        p_mean_minus=values[0], p_mean_plus=values[1],
                                        derivative=deriv, available=ok))
    return base_result, entries
