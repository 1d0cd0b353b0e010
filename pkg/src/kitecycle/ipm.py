"""Primal-dual interior-point solver for sparse nonlinear programs.

Solves  min f(z)  s.t.  c_eq(z) = 0,  c_ineq(z) >= 0,  lb <= z <= ub
by the classic recipe: slack reformulation of the inequalities, a log
barrier with monotone decrease of the barrier parameter, Newton steps on
the primal-dual KKT system (limited-memory quasi-Newton Lagrangian Hessian,
exact first derivatives), fraction-to-the-boundary stepping and a
backtracking line search on an l1 merit function.  Levenberg-style diagonal
regularization is raised until the KKT factorization reports the expected
inertia.

A problem object must provide::

    n, lb, ub, m_eq, m_ineq
    eval(z)   -> (f, c_eq, c_ineq)
    derivs(z) -> (grad_f, J_eq (csr), J_ineq (csr))
    structure -> NodeStructure or None

Solver instances are single-use; independent problems may be solved
concurrently from separate instances.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .kkt import DenseKkt, FactorizationError, StructuredKkt


@dataclass
class SolverOptions:
    tol_opt: float = 1.0e-6        # scaled KKT error for status "optimal"
    tol_feas: float = 1.0e-6       # max constraint violation
    tol_accept: float = 1.0e-4     # KKT error for status "acceptable"
    max_iter: int = 500
    mu_init: float = 1.0e-1
    memory: int = 20               # limited-memory pairs
    tau_boundary: float = 0.995    # fraction-to-the-boundary factor
    bound_push: float = 1.0e-2     # relative interior push-in of the start
    slack_floor: float = 1.0e-4
    delta_c: float = 1.0e-10       # constant dual regularization
    verbose: bool = False
    log_stream: object = None

    def replace(self, **kw):
        from dataclasses import replace as _replace
        return _replace(self, **kw)


@dataclass
class NlpSolution:
    """Solver result with multipliers and KKT diagnostics.

    Sign convention of the returned multipliers:
        grad f + J_eq^T y_eq - J_ineq^T y_ineq - v_lower + v_upper = 0
    with y_ineq, v_lower, v_upper >= 0.
    """

    z: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    v_lower: np.ndarray
    v_upper: np.ndarray
    slacks: np.ndarray
    status: str                    # optimal | acceptable | max_iter | infeasible | error
    kkt_error: dict                # stationarity / feasibility / complementarity / overall
    iterations: int
    wall_time: float
    objective: float
    mu: float
    message: str = ""
    provenance: dict = field(default_factory=dict)

    @property
    def success(self):
        return self.status in ("optimal", "acceptable")


class FunctionalNlp:
    """Adapter turning plain callables into a solver problem.

    Callables are written against :mod:`kitecycle.autodiff` primitives so
    exact derivatives come from forward-mode seeding with dense patterns.
    Intended for small benchmark problems and tests.
    """

    def __init__(self, n, objective, c_eq=None, c_ineq=None, lb=None, ub=None,
                 m_eq=0, m_ineq=0):
        self.n = n
        self._f = objective
        self._ceq = c_eq
        self._cineq = c_ineq
        self.m_eq = m_eq if c_eq is not None else 0
        self.m_ineq = m_ineq if c_ineq is not None else 0
        self.lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        self.ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        self.structure = None
        self._eq_pattern = ad.SparsityPattern.dense(self.m_eq, n)
        self._ineq_pattern = ad.SparsityPattern.dense(self.m_ineq, n)

    def eval(self, z):
        f = float(ad.value(self._f(z)))
        ce = ad.value(self._ceq(z)) if self.m_eq else np.zeros(0)
        ci = ad.value(self._cineq(z)) if self.m_ineq else np.zeros(0)
        return f, np.atleast_1d(ce), np.atleast_1d(ci)

    def derivs(self, z):
        g = ad.gradient(self._f, z)
        je = ad.jacobian(self._ceq, z, self._eq_pattern) if self.m_eq \
            else sparse.csr_matrix((0, self.n))
        ji = ad.jacobian(self._cineq, z, self._ineq_pattern) if self.m_ineq \
            else sparse.csr_matrix((0, self.n))
        return g, je, ji


class _LbfgsHessian:
    """Damped limited-memory BFGS model of the Lagrangian Hessian.

    Kept positive definite through Powell damping; exposed to the KKT
    solver in compact form B = sigma*I - U M^{-1} U^T.
    """

    def __init__(self, n, memory):
        self.n = n
        self.memory = memory
        self.sigma = 1.0
        self._s = []
        self._y = []

    def reset(self):
        self._s, self._y = [], []
        self.sigma = 1.0

    @property
    def n_pairs(self):
        return len(self._s)

    def compact(self):
        """(U, M) with B = sigma I - U M^{-1} U^T, or (None, None) if empty."""
        k = self.n_pairs
        if k == 0:
            return None, None
        S = np.column_stack(self._s)
        Y = np.column_stack(self._y)
        sts = S.T @ S
        sty = S.T @ Y
        L = np.tril(sty, k=-1)
        D = np.diag(np.diag(sty))
        U = np.hstack([self.sigma * S, Y])
        M = np.block([[self.sigma * sts, L], [L.T, -D]])
        return U, M

    def matvec(self, v):
        U, M = self.compact()
        if U is None:
            return self.sigma * v
        return self.sigma * v - U @ np.linalg.solve(M, U.T @ v)

    def update(self, step, grad_diff):
        ss = float(step @ step)
        if ss <= 0.0 or not np.all(np.isfinite(grad_diff)):
            return
        bs = self.matvec(step)
        sbs = float(step @ bs)
        sy = float(step @ grad_diff)
        if sy < 0.2 * sbs:
            theta = 0.8 * sbs / (sbs - sy)
            grad_diff = theta * grad_diff + (1.0 - theta) * bs
            sy = float(step @ grad_diff)
        if sy <= 1.0e-14 * max(1.0, sbs):
            return
        self._s.append(step.copy())
        self._y.append(grad_diff.copy())
        if len(self._s) > self.memory:
            self._s.pop(0)
            self._y.pop(0)
        self.sigma = min(max(float(grad_diff @ grad_diff) / sy, 1.0e-8), 1.0e8)
        # drop the memory if sigma*S^T S lost rank (near-dependent steps)
        S = np.column_stack(self._s)
        try:
            np.linalg.cholesky(self.sigma * (S.T @ S)
                               + 1e-14 * self.sigma * np.eye(self.n_pairs))
        except np.linalg.LinAlgError:
            self.reset()


def _interior_start(z0, lb, ub, push):
    z = np.asarray(z0, dtype=float).copy()
    lo_fin = np.isfinite(lb)
    hi_fin = np.isfinite(ub)
    width = np.where(lo_fin & hi_fin, ub - lb, np.inf)
    p_lo = np.where(lo_fin, np.minimum(push * np.maximum(1.0, np.abs(lb)), 0.5 * width), 0.0)
    p_hi = np.where(hi_fin, np.minimum(push * np.maximum(1.0, np.abs(ub)), 0.5 * width), 0.0)
    z = np.where(lo_fin, np.maximum(z, lb + p_lo), z)
    z = np.where(hi_fin, np.minimum(z, ub - p_hi), z)
    return z


def _max_step(x, dx, tau):
    """Largest alpha <= 1 with x + alpha*dx >= (1 - tau) * x, x > 0 elementwise."""
    if x.size == 0:
        return 1.0
    neg = dx < 0.0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * x[neg] / dx[neg])))


_last_alpha = [0.0]
_last_step = [0.0]


class _IpmState:
    __slots__ = ("z", "s", "y_eq", "y_ineq", "v_lo", "v_up")

    def __init__(self, z, s, y_eq, y_ineq, v_lo, v_up):
        self.z, self.s = z, s
        self.y_eq, self.y_ineq = y_eq, y_ineq
        self.v_lo, self.v_up = v_lo, v_up


def solve(nlp, z0, opts: SolverOptions = SolverOptions(),
          y_eq0=None, y_ineq0=None) -> NlpSolution:
    """Solve an NLP from a primal starting point.

    The start is pushed strictly inside the bounds, slacks and multipliers
    are initialized consistently with the initial barrier parameter, and
    iterations proceed until the scaled KKT error meets the tolerance or
    the iteration budget runs out.  Optional multiplier estimates follow
    the sign convention of :class:`NlpSolution`.
    """
    t_start = time.perf_counter()
    n = nlp.n
    lb, ub = nlp.lb, nlp.ub
    lo_fin, hi_fin = np.isfinite(lb), np.isfinite(ub)
    mu = opts.mu_init

    z = _interior_start(z0, lb, ub, opts.bound_push)
    try:
        f, c_eq, c_ineq = nlp.eval(z)
    except Exception as exc:  # noqa: BLE001 - surfaced as solver error status
        return _error_solution(nlp, z, f"initial point not evaluable: {exc}", t_start)
    if not (np.isfinite(f) and np.all(np.isfinite(c_eq)) and np.all(np.isfinite(c_ineq))):
        return _error_solution(nlp, z, "initial point not finite", t_start)

    s = np.maximum(c_ineq, opts.slack_floor)
    y_ineq = mu / s
    if y_ineq0 is not None:
        y_ineq = np.maximum(np.asarray(y_ineq0, dtype=float), 1e-8)
    y_eq = np.zeros(nlp.m_eq) if y_eq0 is None else -np.asarray(y_eq0, dtype=float)
    factor_cache = _FactorCache()
    if (nlp.m_eq or nlp.m_ineq) and y_eq0 is None and y_ineq0 is None:
        y_eq_ls, y_ineq_ls = _least_squares_multipliers(nlp, z)
        if y_eq_ls is not None and (not y_eq_ls.size or np.abs(y_eq_ls).max() < 1e8):
            y_eq = y_eq_ls
            if y_ineq_ls.size:
                # keep the centered value where least squares is uninformative
                y_ineq = np.where(y_ineq_ls > 1e-8, y_ineq_ls, y_ineq)
    v_lo = np.where(lo_fin, mu / np.maximum(z - lb, 1e-8), 0.0)
    v_up = np.where(hi_fin, mu / np.maximum(ub - z, 1e-8), 0.0)
    state = _IpmState(z, s, y_eq, y_ineq, v_lo, v_up)

    hess = _LbfgsHessian(n, opts.memory)
    nu = 1.0            # l1 penalty of the merit function
    delta_x_last = 0.0
    best = None
    status, message = "max_iter", ""
    it = 0
    grad, j_eq, j_ineq = nlp.derivs(state.z)

    for it in range(1, opts.max_iter + 1):
        err_mu, err_0, parts = _kkt_errors(state, grad, j_eq, j_ineq, c_eq, c_ineq,
                                           lb, ub, lo_fin, hi_fin, mu)
        feas = parts["feasibility"]
        if best is None or err_0 < best[0]:
            best = (err_0, _snapshot(state), f, parts.copy(), mu)
        if opts.verbose:
            merit = _barrier_value(f, state.z, state.s, lb, ub, lo_fin, hi_fin, mu) \
                + nu * (np.abs(c_eq).sum() + (np.abs(c_ineq - state.s).sum()
                                              if state.s.size else 0.0))
            _log(opts, f"it {it:4d}  mu={mu:9.2e}  merit={merit: .6e}  "
                       f"f={f: .6e}  kkt={err_0:9.2e}  feas={feas:9.2e}  "
                       f"step={_last_step[0]:8.2e}  a={_last_alpha[0]:8.2e}  "
                       f"nu={nu:8.2e}  dx={delta_x_last:8.2e}  mem={hess.n_pairs}")
        if err_0 <= opts.tol_opt and feas <= opts.tol_feas:
            status, message = "optimal", "KKT tolerance reached"
            break
        # monotone barrier reduction once the barrier subproblem is solved
        while mu > opts.tol_opt / 10.0 and err_mu <= 10.0 * mu:
            mu = max(opts.tol_opt / 10.0, min(0.2 * mu, mu ** 1.5))
            err_mu, err_0, parts = _kkt_errors(state, grad, j_eq, j_ineq, c_eq, c_ineq,
                                               lb, ub, lo_fin, hi_fin, mu)

        step, delta_x_last, fail = _newton_step(
            nlp, state, grad, j_eq, j_ineq, c_eq, c_ineq, lb, ub,
            lo_fin, hi_fin, mu, hess, factor_cache, delta_x_last, opts)
        if fail is not None:
            status, message = "error", fail
            break

        dz, ds, dy_eq, dy_ineq, dv_lo, dv_up = step
        tau = max(opts.tau_boundary, 1.0 - mu)
        alpha_max = min(
            _max_step(np.where(lo_fin, state.z - lb, 1.0), np.where(lo_fin, dz, 0.0), tau),
            _max_step(np.where(hi_fin, ub - state.z, 1.0), np.where(hi_fin, -dz, 0.0), tau),
            _max_step(state.s, ds, tau))
        alpha_dual = min(_max_step(state.v_lo[lo_fin], dv_lo[lo_fin], tau)
                         if np.any(lo_fin) else 1.0,
                         _max_step(state.v_up[hi_fin], dv_up[hi_fin], tau)
                         if np.any(hi_fin) else 1.0,
                         _max_step(state.y_ineq, dy_ineq, tau))

        accepted, alpha, nu, f_new, c_eq_new, c_ineq_new = _merit_line_search(
            nlp, state, dz, ds, grad, c_eq, c_ineq, mu, nu, alpha_max,
            lb, ub, lo_fin, hi_fin, f)
        _last_alpha[0] = alpha
        _last_step[0] = alpha * float(np.linalg.norm(dz)) if accepted else 0.0
        if not accepted:
            # steepest-descent-like retry with heavy regularization once
            if delta_x_last < 1.0:
                delta_x_last = max(1.0, delta_x_last * 100.0)
                hess.reset()
                continue
            if feas <= opts.tol_feas and err_0 <= opts.tol_accept:
                status, message = "acceptable", "line search stalled at acceptable point"
                break
            status = "infeasible" if feas > opts.tol_feas else "error"
            message = "line search failed"
            break

        step_z = alpha * dz
        state.z = state.z + step_z
        state.s = state.s + alpha * ds
        state.y_eq = state.y_eq + alpha_dual * dy_eq
        state.y_ineq = np.maximum(state.y_ineq + alpha_dual * dy_ineq, 1e-16)
        state.v_lo = np.where(lo_fin, np.maximum(state.v_lo + alpha_dual * dv_lo, 1e-16), 0.0)
        state.v_up = np.where(hi_fin, np.maximum(state.v_up + alpha_dual * dv_up, 1e-16), 0.0)
        _safeguard_bound_duals(state, lb, ub, lo_fin, hi_fin, mu)
        # curvature pair evaluated at the new multipliers on both endpoints
        grad_l_old = grad - j_eq.T @ state.y_eq - j_ineq.T @ state.y_ineq
        f, c_eq, c_ineq = f_new, c_eq_new, c_ineq_new
        grad, j_eq, j_ineq = nlp.derivs(state.z)
        grad_l_new = grad - j_eq.T @ state.y_eq - j_ineq.T @ state.y_ineq
        hess.update(step_z, grad_l_new - grad_l_old)

    else:
        it = opts.max_iter

    err_mu, err_0, parts = _kkt_errors(state, grad, j_eq, j_ineq, c_eq, c_ineq,
                                       lb, ub, lo_fin, hi_fin, mu)
    if status not in ("optimal",) and best is not None and best[0] < err_0:
        err_0, snap, f, parts, mu = best
        state = snap
    feas = parts["feasibility"]
    if status == "max_iter":
        if err_0 <= opts.tol_opt and feas <= opts.tol_feas:
            status = "optimal"
        elif err_0 <= opts.tol_accept and feas <= opts.tol_feas:
            status, message = "acceptable", "iteration budget reached"
        else:
            message = "iteration budget exhausted"
    wall = time.perf_counter() - t_start
    return NlpSolution(z=state.z, y_eq=-state.y_eq, y_ineq=state.y_ineq,
                       v_lower=state.v_lo, v_upper=state.v_up, slacks=state.s,
                       status=status, kkt_error={**parts, "overall": err_0},
                       iterations=it, wall_time=wall, objective=f, mu=mu,
                       message=message)


def warm_solve(nlp, prior: NlpSolution, opts: SolverOptions = SolverOptions(),
               reuse_multipliers: bool = False) -> NlpSolution:
    """Solve starting from a prior solution's primal point.

    The barrier parameter starts small; multipliers are re-estimated unless
    ``reuse_multipliers`` is set.
    """
    if np.asarray(prior.z).size != nlp.n:
        raise ValueError(f"prior has dimension {np.asarray(prior.z).size}, "
                         f"problem expects {nlp.n}")
    w_opts = opts.replace(mu_init=min(opts.mu_init, 1.0e-4))
    if not reuse_multipliers:
        return solve(nlp, prior.z, w_opts)
    return solve(nlp, prior.z, w_opts, y_eq0=prior.y_eq, y_ineq0=prior.y_ineq)


# -- internals ---------------------------------------------------------------


def _snapshot(state):
    return _IpmState(state.z.copy(), state.s.copy(), state.y_eq.copy(),
                     state.y_ineq.copy(), state.v_lo.copy(), state.v_up.copy())


def _log(opts, line):
    print(line, file=opts.log_stream or sys.stderr)


def _error_solution(nlp, z, message, t_start):
    return NlpSolution(z=np.asarray(z, dtype=float), y_eq=np.zeros(nlp.m_eq),
                       y_ineq=np.zeros(nlp.m_ineq), v_lower=np.zeros(nlp.n),
                       v_upper=np.zeros(nlp.n), slacks=np.zeros(nlp.m_ineq),
                       status="error", kkt_error={"overall": np.inf},
                       iterations=0, wall_time=time.perf_counter() - t_start,
                       objective=np.nan, mu=np.nan, message=message)


def _kkt_errors(state, grad, j_eq, j_ineq, c_eq, c_ineq, lb, ub, lo_fin, hi_fin, mu):
    """Scaled KKT errors at (state); returns (E_mu, E_0, parts)."""
    r_stat = grad.copy()
    if j_eq.shape[0]:
        r_stat -= j_eq.T @ state.y_eq
    if j_ineq.shape[0]:
        r_stat -= j_ineq.T @ state.y_ineq
    r_stat -= np.where(lo_fin, state.v_lo, 0.0)
    r_stat += np.where(hi_fin, state.v_up, 0.0)
    mult_sum = (np.abs(state.y_eq).sum() + np.abs(state.y_ineq).sum()
                + state.v_lo[lo_fin].sum() + state.v_up[hi_fin].sum())
    mult_cnt = (state.y_eq.size + state.y_ineq.size
                + int(lo_fin.sum()) + int(hi_fin.sum()))
    s_max = 100.0
    s_d = max(s_max, mult_sum / max(1, mult_cnt)) / s_max
    bmult_sum = state.v_lo[lo_fin].sum() + state.v_up[hi_fin].sum() + state.y_ineq.sum()
    bmult_cnt = int(lo_fin.sum()) + int(hi_fin.sum()) + state.y_ineq.size
    s_c = max(s_max, bmult_sum / max(1, bmult_cnt)) / s_max
    feas_eq = np.abs(c_eq).max() if c_eq.size else 0.0
    feas_in = np.maximum(-c_ineq, 0.0).max() if c_ineq.size else 0.0
    slack_gap = np.abs(c_ineq - state.s).max() if c_ineq.size else 0.0
    feas = max(feas_eq, feas_in)

    def comp_err(mu_val):
        comps = []
        if np.any(lo_fin):
            comps.append(np.abs((state.z - lb)[lo_fin] * state.v_lo[lo_fin] - mu_val).max())
        if np.any(hi_fin):
            comps.append(np.abs((ub - state.z)[hi_fin] * state.v_up[hi_fin] - mu_val).max())
        if state.s.size:
            comps.append(np.abs(state.s * state.y_ineq - mu_val).max())
        return max(comps) if comps else 0.0

    stat = np.abs(r_stat).max() / s_d if r_stat.size else 0.0
    e_mu = max(stat, max(feas, slack_gap), comp_err(mu) / s_c)
    e_0 = max(stat, max(feas, slack_gap), comp_err(0.0) / s_c)
    parts = {"stationarity": float(stat), "feasibility": float(feas),
             "complementarity": float(comp_err(0.0) / s_c)}
    return e_mu, e_0, parts


class _FactorCache:
    """Holds the structured factorizer (pattern maps) across iterations."""

    def __init__(self):
        self.structured = None

    def get(self, nlp, j_eq, j_ineq):
        if nlp.structure is None:
            return None
        if self.structured is None:
            self.structured = StructuredKkt(nlp.structure, j_eq, j_ineq)
        return self.structured


def _least_squares_multipliers(nlp, z):
    """Multipliers minimizing the stationarity residual at the start.

    Solves (J J^T + delta I) y = J grad for the stacked equality and
    inequality Jacobian; the caller clips inequality entries positive.
    """
    try:
        from scipy.sparse.linalg import splu
        grad, j_eq, j_ineq = nlp.derivs(z)
        j_all = sparse.vstack([j_eq, j_ineq]).tocsc()
        m = j_all.shape[0]
        if m == 0:
            return None, None
        gram = (j_all @ j_all.T + 1e-10 * sparse.eye(m)).tocsc()
        y = splu(gram).solve(j_all @ grad)
        if not np.all(np.isfinite(y)):
            return None, None
        return y[: nlp.m_eq], y[nlp.m_eq:]
    except Exception:  # noqa: BLE001 - initialization is best-effort
        return None, None


def _newton_step(nlp, state, grad, j_eq, j_ineq, c_eq, c_ineq, lb, ub,
                 lo_fin, hi_fin, mu, hess, factor_cache, delta_x_last, opts):
    """Assemble and solve the regularized primal-dual system.

    Returns ((dz, ds, dy_eq, dy_ineq, dv_lo, dv_up), delta_x_used, error_or_None).
    """
    z, s = state.z, state.s
    sl_lo = np.where(lo_fin, z - lb, 1.0)
    sl_hi = np.where(hi_fin, ub - z, 1.0)
    d_lo = np.where(lo_fin, state.v_lo / sl_lo, 0.0)
    d_hi = np.where(hi_fin, state.v_up / sl_hi, 0.0)
    sigma_s = state.y_ineq / s if s.size else np.zeros(0)

    r1 = grad.copy()
    if j_eq.shape[0]:
        r1 -= j_eq.T @ state.y_eq
    if j_ineq.shape[0]:
        r1 -= j_ineq.T @ state.y_ineq
    r1 -= np.where(lo_fin, state.v_lo, 0.0)
    r1 += np.where(hi_fin, state.v_up, 0.0)
    r2 = s * state.y_ineq - mu if s.size else np.zeros(0)
    r3 = c_eq
    r4 = c_ineq - s if s.size else np.zeros(0)
    r5 = np.where(lo_fin, sl_lo * state.v_lo - mu, 0.0)
    r6 = np.where(hi_fin, sl_hi * state.v_up - mu, 0.0)

    rhs_z = -r1 - np.where(lo_fin, r5 / sl_lo, 0.0) + np.where(hi_fin, r6 / sl_hi, 0.0)
    if s.size:
        rhs_z -= j_ineq.T @ (r2 / s + sigma_s * r4)
    rhs_eq = -r3

    w0 = hess.sigma + d_lo + d_hi
    u_aux, m_aux = hess.compact()
    expected_pairs = hess.n_pairs

    delta_c = opts.delta_c
    attempts = [0.0] if delta_x_last == 0.0 else [max(1e-10, delta_x_last / 3.0)]
    while attempts[-1] < 1e11:
        attempts.append(max(attempts[-1] * 10.0, 1e-8))
    for delta_x in attempts:
        try:
            if nlp.structure is not None:
                fac = factor_cache.get(nlp, j_eq, j_ineq)
                fac.factor(w0, sigma_s, j_eq, j_ineq, delta_x, max(delta_c, 1e-12),
                           u_aux, m_aux)
                n_pos_expect = nlp.n + expected_pairs
                n_neg_expect = nlp.m_eq + expected_pairs
                if fac.inertia[:2] != (n_pos_expect, n_neg_expect):
                    raise FactorizationError("unexpected inertia")
                dz, q = fac.solve(rhs_z, rhs_eq)
            else:
                w_dense = None
                if s.size:
                    jd = j_ineq.toarray() if sparse.issparse(j_ineq) else j_ineq
                    w_dense = (jd.T * sigma_s) @ jd
                fac = DenseKkt(w0, w_dense, j_eq, delta_x, max(delta_c, 1e-12),
                               u_aux, m_aux)
                n_pos_expect = nlp.n + expected_pairs
                n_neg_expect = nlp.m_eq + expected_pairs
                if fac.inertia != (n_pos_expect, n_neg_expect, 0):
                    raise FactorizationError("unexpected inertia")
                dz, q = fac.solve(rhs_z, rhs_eq)
            if not (np.all(np.isfinite(dz)) and np.all(np.isfinite(q))):
                raise FactorizationError("non-finite step")
            dy_eq = -q
            ds = (j_ineq @ dz + r4) if s.size else np.zeros(0)
            dy_ineq = -(r2 + state.y_ineq * ds) / s if s.size else np.zeros(0)
            dv_lo = np.where(lo_fin, -(r5 + state.v_lo * dz) / sl_lo, 0.0)
            dv_up = np.where(hi_fin, -(r6 - state.v_up * dz) / sl_hi, 0.0)
            return (dz, ds, dy_eq, dy_ineq, dv_lo, dv_up), delta_x, None
        except FactorizationError:
            continue
    return None, delta_x_last, "KKT factorization failed at maximum regularization"


def _barrier_value(f, z, s, lb, ub, lo_fin, hi_fin, mu):
    val = f
    if np.any(lo_fin):
        val -= mu * np.log((z - lb)[lo_fin]).sum()
    if np.any(hi_fin):
        val -= mu * np.log((ub - z)[hi_fin]).sum()
    if s.size:
        val -= mu * np.log(s).sum()
    return val


def _merit_line_search(nlp, state, dz, ds, grad, c_eq, c_ineq, mu, nu, alpha_max,
                       lb, ub, lo_fin, hi_fin, f):
    """Backtracking Armijo search on the l1 merit function.

    Returns (accepted, alpha, nu, f_new, c_eq_new, c_ineq_new).
    """
    z, s = state.z, state.s
    theta = (np.abs(c_eq).sum() if c_eq.size else 0.0) \
        + (np.abs(c_ineq - s).sum() if s.size else 0.0)
    dphi = float(grad @ dz)
    if np.any(lo_fin):
        dphi -= mu * ((dz / (z - lb))[lo_fin]).sum()
    if np.any(hi_fin):
        dphi += mu * ((dz / (ub - z))[hi_fin]).sum()
    if s.size:
        dphi -= mu * (ds / s).sum()
    # penalty weight keeping the direction merit-descent; decays when the
    # requirement drops so the search is not poisoned by early infeasibility
    nu_req = dphi / (0.5 * theta) if theta > 1e-14 else 0.0
    if nu_req + 1.0e-4 > nu:
        nu = nu_req + 1.0e-4
    elif nu_req < 0.25 * nu:
        nu = max(0.5 * nu, nu_req + 1.0e-4, 1.0e-4)
    nu = max(nu, 1.0e-4)
    d_merit = dphi - nu * theta
    if d_merit >= 0.0 and theta <= 1e-14:
        # feasible non-descent direction: accept a unit step only if it
        # reduces the merit, else report failure
        d_merit = -1e-16
    merit_0 = _barrier_value(f, z, s, lb, ub, lo_fin, hi_fin, mu) + nu * theta
    alpha = alpha_max
    for _ in range(40):
        z_t = z + alpha * dz
        s_t = s + alpha * ds
        try:
            f_t, c_eq_t, c_ineq_t = nlp.eval(z_t)
        except Exception:  # noqa: BLE001 - trial point rejected
            alpha *= 0.5
            continue
        if not (np.isfinite(f_t) and np.all(np.isfinite(c_eq_t))
                and np.all(np.isfinite(c_ineq_t))):
            alpha *= 0.5
            continue
        theta_t = (np.abs(c_eq_t).sum() if c_eq_t.size else 0.0) \
            + (np.abs(c_ineq_t - s_t).sum() if s_t.size else 0.0)
        merit_t = _barrier_value(f_t, z_t, s_t, lb, ub, lo_fin, hi_fin, mu) + nu * theta_t
        if merit_t <= merit_0 + 1.0e-4 * alpha * d_merit:
            return True, alpha, nu, f_t, c_eq_t, c_ineq_t
        alpha *= 0.5
        if alpha < 1e-12:
            break
    return False, 0.0, nu, f, c_eq, c_ineq


def _safeguard_bound_duals(state, lb, ub, lo_fin, hi_fin, mu):
    """Keep bound duals within a wide primal-dual corridor (kappa = 1e10)."""
    kappa = 1.0e10
    if np.any(lo_fin):
        base = mu / (state.z - lb)[lo_fin]
        state.v_lo[lo_fin] = np.clip(state.v_lo[lo_fin], base / kappa, base * kappa)
    if np.any(hi_fin):
        base = mu / (ub - state.z)[hi_fin]
        state.v_up[hi_fin] = np.clip(state.v_up[hi_fin], base / kappa, base * kappa)
