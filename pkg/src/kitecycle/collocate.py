"""Direct trapezoidal collocation of an OcpProblem into a sparse NLP.

States and controls live at the mesh nodes; interval defects force the
trapezoidal ODE residual to zero, periodicity ties the first and last node,
and path constraints are imposed at every node.  The cycle time multiplies
the defects (time-scaled formulation on the unit pseudo-time grid), so a
free duration is one extra decision variable.

The resulting :class:`CollocationNlp` exposes value and derivative callbacks
for the interior-point solver plus the node structure that makes the KKT
factorization banded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Dual, SparsityPattern
from .kite import CycleResult, cycle_energy, phase_labels
from .ocp import ConfigurationError, OcpProblem


class EvaluationError(RuntimeError):
    """Non-finite value produced by an NLP callback."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class Mesh:
    """Collocation grid on the unit pseudo-time interval."""

    n_intervals: int
    tau: np.ndarray = None

    def __post_init__(self):
        n = self.n_intervals
        if n < 2:
            raise ConfigurationError("need at least 2 collocation intervals")
        if self.tau is None:
            object.__setattr__(self, "tau", np.linspace(0.0, 1.0, n + 1))
        tau = np.asarray(self.tau, dtype=float)
        if tau.shape != (n + 1,) or tau[0] != 0.0 or tau[-1] != 1.0 or np.any(np.diff(tau) <= 0):
            raise ConfigurationError("mesh grid must increase strictly from 0 to 1")
        object.__setattr__(self, "tau", tau)

    @property
    def n_nodes(self):
        return self.n_intervals + 1

    @property
    def dtau(self):
        return np.diff(self.tau)

    def quad_weights(self):
        """Trapezoidal node weights on [0, 1] (sum to one)."""
        w = np.zeros(self.n_nodes)
        d = self.dtau
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w


class DecisionLayout:
    """Index bookkeeping for the decision vector.

    Ordering: states node-major, then controls node-major, then the free
    cycle time (when present), then one slack per node for each relaxed
    path constraint.
    """

    def __init__(self, n_nodes, n_x, n_u, free_t, relaxed_names):
        self.n_nodes = n_nodes
        self.n_x = n_x
        self.n_u = n_u
        self.free_t = bool(free_t)
        self.relaxed_names = tuple(relaxed_names)
        self.x_offset = 0
        self.u_offset = n_nodes * n_x
        self.t_index = self.u_offset + n_nodes * n_u if self.free_t else None
        self.slack_offset = self.u_offset + n_nodes * n_u + (1 if self.free_t else 0)
        self.n_slack = len(self.relaxed_names) * n_nodes
        self.n_total = self.slack_offset + self.n_slack

    def x_index(self, node, comp):
        return self.x_offset + node * self.n_x + comp

    def u_index(self, node, comp):
        return self.u_offset + node * self.n_u + comp

    def slack_index(self, kind, node):
        return self.slack_offset + kind * self.n_nodes + node

    def node_of_variable(self, idx):
        """Node owning a decision variable, or -1 for the cycle time."""
        if self.t_index is not None and idx == self.t_index:
            return -1
        if idx < self.u_offset:
            return idx // self.n_x
        if idx < self.u_offset + self.n_nodes * self.n_u:
            return (idx - self.u_offset) // self.n_u
        return (idx - self.slack_offset) % self.n_nodes

    def split(self, z):
        """View a decision vector as (X, U, t_or_None, S)."""
        nn = self.n_nodes
        x = z[self.x_offset:self.u_offset].reshape(nn, self.n_x)
        u = z[self.u_offset:self.u_offset + nn * self.n_u].reshape(nn, self.n_u)
        t = z[self.t_index] if self.free_t else None
        s = z[self.slack_offset:self.slack_offset + self.n_slack]
        return x, u, t, s

    def pack(self, x_nodes, u_nodes, t_scaled=None, slacks=None):
        z = np.zeros(self.n_total)
        z[self.x_offset:self.u_offset] = np.asarray(x_nodes, dtype=float).ravel()
        z[self.u_offset:self.u_offset + self.n_nodes * self.n_u] = \
            np.asarray(u_nodes, dtype=float).ravel()
        if self.free_t:
            if t_scaled is None:
                raise ValueError("free cycle time requires a value")
            z[self.t_index] = float(t_scaled)
        if slacks is not None:
            z[self.slack_offset:] = np.asarray(slacks, dtype=float).ravel()
        return z


@dataclass
class NodeStructure:
    """Banded coupling structure of the transcription for the KKT solver.

    Equality group i couples only the variables of nodes i and i+1 plus the
    border variables; inequality group i couples node i only; border rows
    may couple anything.
    """

    node_vars: list
    eq_groups: list
    ineq_groups: list
    border_vars: np.ndarray
    border_eq_rows: np.ndarray


class CollocationNlp:
    """Sparse NLP produced by direct collocation.

    Attributes:
        n: decision dimension.
        lb, ub: variable bounds (scaled units, +-inf where free).
        m_eq, m_ineq: constraint dimensions.
        structure: :class:`NodeStructure` hint for banded KKT factorization.
    """

    def __init__(self, problem: OcpProblem, mesh: Mesh):
        self.problem = problem
        self.mesh = mesh
        n_x, n_u = problem.n_states, problem.n_controls
        nn = mesh.n_nodes
        self.relaxed_names = tuple(k for k in problem.path_names if k in problem.relaxed)
        self.layout = DecisionLayout(nn, n_x, n_u, problem.t_fixed is None, self.relaxed_names)
        self._build_bounds()
        self._build_rows()
        self._build_pattern()
        self._build_structure()
        self._quad_w = mesh.quad_weights()
        self._obj_weights = self._build_obj_weights()
        self._lin_obj = self._build_linear_objective()

    # -- construction -------------------------------------------------------

    def _build_bounds(self):
        pr, lo, hi = self.problem, [], []
        sc = pr.scaling
        nn = self.layout.n_nodes
        lo.append(np.tile(pr.x_lb / sc.x, nn))
        hi.append(np.tile(pr.x_ub / sc.x, nn))
        lo.append(np.tile(pr.u_lb / sc.u, nn))
        hi.append(np.tile(pr.u_ub / sc.u, nn))
        if self.layout.free_t:
            lo.append([pr.t_bounds[0] / sc.t])
            hi.append([pr.t_bounds[1] / sc.t])
        if self.layout.n_slack:
            lo.append(np.zeros(self.layout.n_slack))
            hi.append(np.full(self.layout.n_slack, np.inf))
        self.lb = np.concatenate(lo)
        self.ub = np.concatenate(hi)
        self.n = self.layout.n_total

    def _build_rows(self):
        n_x, n_c = self.problem.n_states, self.problem.n_path
        n_u, nn = self.problem.n_controls, self.layout.n_nodes
        n_int = self.mesh.n_intervals
        self.m_defect = n_x * n_int
        self.m_periodic = n_x if self.problem.periodic else 0
        self.m_eq = self.m_defect + self.m_periodic
        self.m_ineq = n_c * nn
        self.n_obj_cost = nn
        self.n_obj_reg = n_u * n_int if self.problem.eps_reg > 0.0 else 0
        self.m_rows = self.m_eq + self.m_ineq + self.n_obj_cost + self.n_obj_reg
        self.eq_slice = slice(0, self.m_eq)
        self.ineq_slice = slice(self.m_eq, self.m_eq + self.m_ineq)
        self.obj_slice = slice(self.m_eq + self.m_ineq, self.m_rows)

    def _defect_row(self, comp, interval):
        return comp * self.mesh.n_intervals + interval

    def _path_row(self, kind, node):
        return kind * self.layout.n_nodes + node

    def _build_pattern(self):
        lay, pr = self.layout, self.problem
        n_x, n_u, n_c = pr.n_states, pr.n_controls, pr.n_path
        nn, n_int = lay.n_nodes, self.mesh.n_intervals
        rows, cols = [], []

        def node_cols(i):
            return ([lay.x_index(i, j) for j in range(n_x)]
                    + [lay.u_index(i, j) for j in range(n_u)])

        node_col_cache = [node_cols(i) for i in range(nn)]
        for j in range(n_x):
            for i in range(n_int):
                r = self._defect_row(j, i)
                cc = node_col_cache[i] + node_col_cache[i + 1]
                if lay.free_t:
                    cc = cc + [lay.t_index]
                rows.extend([r] * len(cc))
                cols.extend(cc)
        if pr.periodic:
            for j in range(n_x):
                r = self.m_defect + j
                rows.extend([r, r])
                cols.extend([lay.x_index(0, j), lay.x_index(nn - 1, j)])
        for k in range(n_c):
            for i in range(nn):
                r = self.m_eq + self._path_row(k, i)
                cc = list(node_col_cache[i])
                if pr.path_names[k] in self.relaxed_names:
                    cc.append(lay.slack_index(self.relaxed_names.index(pr.path_names[k]), i))
                rows.extend([r] * len(cc))
                cols.extend(cc)
        base = self.m_eq + self.m_ineq
        for i in range(nn):
            cc = node_col_cache[i]
            rows.extend([base + i] * len(cc))
            cols.extend(cc)
        if self.n_obj_reg:
            base = self.m_eq + self.m_ineq + nn
            for k in range(n_u):
                for i in range(n_int):
                    r = base + k * n_int + i
                    cc = [lay.u_index(i, k), lay.u_index(i + 1, k)]
                    if lay.free_t:
                        cc.append(lay.t_index)
                    rows.extend([r] * len(cc))
                    cols.extend(cc)
        self.pattern = SparsityPattern(rows, cols, (self.m_rows, lay.n_total))
        rr, cc_ = self.pattern.rows, self.pattern.cols
        eq_mask = rr < self.m_eq
        ineq_mask = (rr >= self.m_eq) & (rr < self.m_eq + self.m_ineq)
        self.eq_pattern = SparsityPattern(rr[eq_mask], cc_[eq_mask],
                                          (self.m_eq, lay.n_total))
        self.ineq_pattern = SparsityPattern(rr[ineq_mask] - self.m_eq, cc_[ineq_mask],
                                            (self.m_ineq, lay.n_total))

    def _build_structure(self):
        lay, pr = self.layout, self.problem
        nn, n_int = lay.n_nodes, self.mesh.n_intervals
        n_x, n_u, n_c = pr.n_states, pr.n_controls, pr.n_path
        node_vars = []
        for i in range(nn):
            vv = [lay.x_index(i, j) for j in range(n_x)]
            vv += [lay.u_index(i, j) for j in range(n_u)]
            vv += [lay.slack_index(k, i) for k in range(len(self.relaxed_names))]
            node_vars.append(np.array(vv, dtype=np.int64))
        eq_groups = [np.array([self._defect_row(j, i) for j in range(n_x)], dtype=np.int64)
                     for i in range(n_int)]
        ineq_groups = [np.array([self._path_row(k, i) for k in range(n_c)], dtype=np.int64)
                       for i in range(nn)]
        border_vars = np.array([lay.t_index] if lay.free_t else [], dtype=np.int64)
        border_eq = np.arange(self.m_defect, self.m_eq, dtype=np.int64)
        self.structure = NodeStructure(node_vars, eq_groups, ineq_groups,
                                       border_vars, border_eq)

    def _build_obj_weights(self):
        w = np.zeros(self.m_rows)
        w[self.m_eq + self.m_ineq: self.m_eq + self.m_ineq + self.n_obj_cost] = self._quad_w_safe()
        if self.n_obj_reg:
            w[self.m_eq + self.m_ineq + self.n_obj_cost:] = self.problem.eps_reg
        return w

    def _quad_w_safe(self):
        return self.mesh.quad_weights()

    def _build_linear_objective(self):
        lin = np.zeros(self.layout.n_total)
        w = self.mesh.quad_weights()
        for k, name in enumerate(self.relaxed_names):
            weight = self.problem.relaxed[name]
            for i in range(self.layout.n_nodes):
                lin[self.layout.slack_index(k, i)] = weight * w[i]
        return lin

    # -- evaluation ---------------------------------------------------------

    def _mega(self, z):
        """All constraint and objective rows from one batched stage evaluation."""
        pr, lay, mesh = self.problem, self.layout, self.mesh
        sc = pr.scaling
        x_hat, u_hat, t_hat, s_hat = lay.split(z)
        t_phys = t_hat * sc.t if lay.free_t else pr.t_fixed
        x_cols = tuple(x_hat[:, j] * sc.x[j] for j in range(pr.n_states))
        u_cols = tuple(u_hat[:, j] * sc.u[j] for j in range(pr.n_controls))
        rates, path_rows, cost = pr.stage_eval(x_cols, u_cols)
        dtau = mesh.dtau
        parts = []
        for j in range(pr.n_states):
            f_hat = rates[j] / sc.x[j]
            half = t_phys * (0.5 * dtau)
            parts.append(x_hat[1:, j] - x_hat[:-1, j] - half * (f_hat[:-1] + f_hat[1:]))
        if pr.periodic:
            parts.append(x_hat[0, :] - x_hat[-1, :])
        for k in range(pr.n_path):
            row = path_rows[k] / pr.path_scales[k]
            if pr.path_names[k] in self.relaxed_names:
                row = row + s_hat[self.relaxed_names.index(pr.path_names[k]) * lay.n_nodes:
                                  (self.relaxed_names.index(pr.path_names[k]) + 1) * lay.n_nodes]
            parts.append(row)
        parts.append(cost)
        if self.n_obj_reg:
            ratio = pr.time_ref / t_phys if lay.free_t else pr.time_ref / pr.t_fixed
            for k in range(pr.n_controls):
                du = (u_hat[1:, k] - u_hat[:-1, k]) * (sc.u[k] / pr.rate_scales[k])
                parts.append(du * du / dtau * (ratio * ratio))
        return ad.concat(parts)

    def eval(self, z):
        """Objective and constraint values at a decision vector.

        Returns (f, c_eq, c_ineq); deterministic and pure.  Non-finite
        entries are reported through :meth:`check_finite` / `evaluate`.
        """
        rows = self._mega(np.asarray(z, dtype=float))
        f = float(self._obj_weights @ rows + self._lin_obj @ z)
        return f, rows[self.eq_slice], rows[self.ineq_slice]

    def derivs(self, z):
        """Gradient and sparse Jacobians at z via compressed forward seeding."""
        z = np.asarray(z, dtype=float)
        jac = ad.jacobian(self._mega, z, self.pattern)
        grad = jac.T @ self._obj_weights + self._lin_obj
        j_eq = jac[: self.m_eq]
        j_ineq = jac[self.m_eq: self.m_eq + self.m_ineq]
        return grad, j_eq.tocsr(), j_ineq.tocsr()

    def row_node(self, row):
        """Mesh node (or interval start) associated with a mega row, for diagnostics."""
        if row < self.m_defect:
            return int(row % self.mesh.n_intervals)
        if row < self.m_eq:
            return 0
        if row < self.m_eq + self.m_ineq:
            return int((row - self.m_eq) % self.layout.n_nodes)
        r = row - self.m_eq - self.m_ineq
        if r < self.n_obj_cost:
            return int(r)
        return int((r - self.n_obj_cost) % self.mesh.n_intervals)


def transcribe(problem: OcpProblem, mesh: Mesh) -> CollocationNlp:
    """Transcribe a (scaled) OcpProblem on a mesh into a sparse NLP."""
    return CollocationNlp(problem, mesh)


def evaluate(nlp: CollocationNlp, z):
    """Public evaluation with non-finite flagging.

    Raises:
        EvaluationError: naming the mesh node of the first non-finite row.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (nlp.n,):
        raise ValueError(f"decision vector must have length {nlp.n}")
    rows = nlp._mega(z)
    bad = ~np.isfinite(rows)
    if np.any(bad):
        row = int(np.argmax(bad))
        node = nlp.row_node(row)
        raise EvaluationError(f"non-finite constraint/objective row {row} at node {node}",
                              node=node)
    f = float(nlp._obj_weights @ rows + nlp._lin_obj @ z)
    if not np.isfinite(f):
        raise EvaluationError("non-finite objective", node=None)
    return f, np.concatenate([rows[nlp.eq_slice], rows[nlp.ineq_slice]])


def residual_report(nlp: CollocationNlp, z):
    """Max violation per named constraint family (scaled units)."""
    _, c_eq, c_ineq = nlp.eval(z)
    report = {}
    report["defects"] = float(np.abs(c_eq[: nlp.m_defect]).max()) if nlp.m_defect else 0.0
    if nlp.problem.periodic:
        report["periodicity"] = float(np.abs(c_eq[nlp.m_defect:]).max())
    nn = nlp.layout.n_nodes
    for k, name in enumerate(nlp.problem.path_names):
        rows = c_ineq[k * nn: (k + 1) * nn]
        report[name] = float(np.maximum(-rows, 0.0).max())
    lo = np.maximum(nlp.lb - z, 0.0)
    hi = np.maximum(z - nlp.ub, 0.0)
    report["bounds"] = float(np.maximum(lo, hi).max())
    return report


def extract(nlp: CollocationNlp, z, provenance=None) -> CycleResult:
    """Physical trajectory, per-node flow state, phases and energies at z."""
    pr = nlp.problem
    if pr.flow_eval is None:
        raise ConfigurationError("extract requires a problem with a flow evaluator")
    sc = pr.scaling
    x_hat, u_hat, t_hat, _ = nlp.layout.split(np.asarray(z, dtype=float))
    t_cycle = float(t_hat * sc.t) if nlp.layout.free_t else pr.t_fixed
    states = x_hat * sc.x
    controls = u_hat * sc.u
    t_nodes = nlp.mesh.tau * t_cycle
    x_cols = tuple(states[:, j] for j in range(states.shape[1]))
    u_cols = tuple(controls[:, j] for j in range(controls.shape[1]))
    force, p_elec, wind_eff = pr.flow_eval(x_cols, u_cols)
    v_reel = controls[:, pr.control_names.index("v_reel")]
    energy = cycle_energy(t_nodes, p_elec)
    f_obj, _, _ = nlp.eval(z)
    return CycleResult(
        t=t_nodes, states=states, controls=controls, force=np.asarray(force),
        p_elec=np.asarray(p_elec), wind_eff=np.asarray(wind_eff),
        phase=phase_labels(v_reel), energy=energy,
        residuals=residual_report(nlp, z), status="unsolved", iterations=0,
        kkt_error=np.nan, objective=f_obj, provenance=dict(provenance or {}))


def resample_decision(nlp_src: CollocationNlp, z_src, nlp_dst: CollocationNlp):
    """Linear interpolation of a decision vector onto another mesh.

    Used for warm-starting refined meshes; slacks are re-zeroed.
    """
    if nlp_src.problem.n_states != nlp_dst.problem.n_states:
        raise ValueError("state dimensions differ")
    xs, us, ts, _ = nlp_src.layout.split(np.asarray(z_src, dtype=float))
    tau_s, tau_d = nlp_src.mesh.tau, nlp_dst.mesh.tau
    x_new = np.column_stack([np.interp(tau_d, tau_s, xs[:, j])
                             for j in range(xs.shape[1])])
    u_new = np.column_stack([np.interp(tau_d, tau_s, us[:, j])
                             for j in range(us.shape[1])])
    t_val = ts if nlp_src.layout.free_t else None
    if nlp_dst.layout.free_t:
        t_val = float(ts) if t_val is not None else \
            nlp_dst.problem.t_fixed / nlp_dst.problem.scaling.t
    return nlp_dst.layout.pack(x_new, u_new, t_val,
                               np.zeros(nlp_dst.layout.n_slack))
