"""Symmetric indefinite KKT solves for the interior-point method.

Two factorization paths share one interface:

* a structured block-LDL^T that walks the collocation chain node by node
  (block tridiagonal with a dense border holding the cycle time, the
  periodicity rows and the quasi-Newton correction), and
* a dense factorization for small or unstructured problems.

Both report the matrix inertia so the solver can apply Levenberg-style
diagonal regularization until the inertia matches the expected
(n_primal + k, m_equality + k) signature.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy import sparse


class FactorizationError(RuntimeError):
    """Pivot breakdown; the caller should increase regularization."""


def inertia_of_ldl_d(d, tol=0.0):
    """(n_pos, n_neg, n_zero) of the block-diagonal D from an LDL^T factorization."""
    n = d.shape[0]
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and (d[i + 1, i] != 0.0 or d[i, i + 1] != 0.0):
            ev = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            for e in ev:
                if e > tol:
                    pos += 1
                elif e < -tol:
                    neg += 1
                else:
                    zero += 1
            i += 2
        else:
            e = d[i, i]
            if e > tol:
                pos += 1
            elif e < -tol:
                neg += 1
            else:
                zero += 1
            i += 1
    return pos, neg, zero


class DenseKkt:
    """Dense LDL^T of the full augmented system; for small problems.

    Layout: [primal z | equality duals | quasi-Newton auxiliaries].
    """

    def __init__(self, w_diag, w_dense, j_eq, delta_x, delta_c, u_aux=None, m_aux=None):
        n = w_diag.shape[0]
        m = j_eq.shape[0] if j_eq is not None else 0
        k2 = u_aux.shape[1] if u_aux is not None else 0
        dim = n + m + k2
        K = np.zeros((dim, dim))
        K[:n, :n] = w_dense if w_dense is not None else 0.0
        K[:n, :n][np.diag_indices(n)] += w_diag + delta_x
        if m:
            je = j_eq.toarray() if sparse.issparse(j_eq) else np.asarray(j_eq)
            K[n:n + m, :n] = je
            K[:n, n:n + m] = je.T
            K[n:n + m, n:n + m] = -delta_c * np.eye(m)
        if k2:
            K[:n, n + m:] = u_aux
            K[n + m:, :n] = u_aux.T
            K[n + m:, n + m:] = m_aux
        self.n, self.m, self.k2 = n, m, k2
        lu, d, perm = sla.ldl(K, lower=True)
        self._lu, self._d, self._perm = lu, d, perm
        self.inertia = inertia_of_ldl_d(d)
        # Triangular solve machinery: rows permuted by perm give a true
        # unit-lower factor.
        self._lower = lu[perm]
        if abs(np.diag(self._lower) - 1.0).max() > 1e-12:
            raise FactorizationError("LDL factor not unit lower triangular")

    def solve(self, rhs_z, rhs_eq):
        b = np.concatenate([rhs_z, rhs_eq, np.zeros(self.k2)])
        bp = b[self._perm]
        y1 = sla.solve_triangular(self._lower, bp, lower=True, unit_diagonal=True)
        y2 = _solve_block_diag(self._d, y1)
        y3 = sla.solve_triangular(self._lower.T, y2, lower=False, unit_diagonal=True)
        x = np.empty_like(b)
        x[self._perm] = y3
        return x[: self.n], x[self.n: self.n + self.m]


def _solve_block_diag(d, b):
    """Solve with the 1x1/2x2 block-diagonal D of an LDL^T factorization."""
    n = d.shape[0]
    x = np.empty_like(b)
    i = 0
    while i < n:
        if i + 1 < n and (d[i + 1, i] != 0.0 or d[i, i + 1] != 0.0):
            blk = d[i:i + 2, i:i + 2]
            det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
            if det == 0.0:
                raise FactorizationError("singular 2x2 pivot")
            x[i] = (blk[1, 1] * b[i] - blk[0, 1] * b[i + 1]) / det
            x[i + 1] = (-blk[1, 0] * b[i] + blk[0, 0] * b[i + 1]) / det
            i += 2
        else:
            if d[i, i] == 0.0:
                raise FactorizationError("zero pivot")
            x[i] = b[i] / d[i, i]
            i += 1
    return x


class _CsrBlockMap:
    """Precomputed gather from a fixed-pattern CSR into dense blocks."""

    def __init__(self, ref_csr, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self.shape = (rows.size, cols.size)
        idx = np.full(self.shape, -1, dtype=np.int64)
        indptr, indices = ref_csr.indptr, ref_csr.indices
        for a, r in enumerate(rows):
            lo, hi = indptr[r], indptr[r + 1]
            row_cols = indices[lo:hi]
            pos = np.searchsorted(row_cols, cols)
            ok = (pos < hi - lo)
            ok[ok] &= row_cols[pos[ok]] == cols[ok]
            idx[a, ok] = lo + pos[ok]
        self.idx = idx
        self.mask = idx >= 0

    def gather(self, data):
        out = np.zeros(self.shape)
        out[self.mask] = data[self.idx[self.mask]]
        return out


class StructuredKkt:
    """Block-tridiagonal-with-border LDL^T for collocation KKT systems.

    Per node the diagonal block is [[W_i, A_i^T], [A_i, -delta_c I]] with
    W_i positive definite, factored by a two-level Cholesky, so the inertia
    of the chain is correct by construction; any Cholesky breakdown signals
    the caller to regularize.  The border gathers the cycle time column,
    the periodicity rows and the limited-memory Hessian auxiliary block,
    whose inertia is checked explicitly.
    """

    def __init__(self, structure, j_eq_ref, j_ineq_ref):
        self.structure = structure
        g = len(structure.node_vars)
        self.n_groups = g
        nb_v = len(structure.border_vars)

        def batch(maps):
            idx = np.stack([m.idx for m in maps])
            return idx.clip(0), (idx >= 0).astype(float)

        a_maps = [_CsrBlockMap(j_eq_ref, structure.eq_groups[i], structure.node_vars[i])
                  for i in range(g - 1)]
        b_maps = [_CsrBlockMap(j_eq_ref, structure.eq_groups[i], structure.node_vars[i + 1])
                  for i in range(g - 1)]
        self._a_idx, self._a_mask = batch(a_maps)
        self._b_idx, self._b_mask = batch(b_maps)
        if nb_v:
            t_maps = [_CsrBlockMap(j_eq_ref, structure.eq_groups[i], structure.border_vars)
                      for i in range(g - 1)]
            self._t_idx, self._t_mask = batch(t_maps)
        else:
            self._t_idx = None
        per_maps = [_CsrBlockMap(j_eq_ref, structure.border_eq_rows, structure.node_vars[i])
                    for i in range(g)]
        self._per_idx, self._per_mask = batch(per_maps)
        ji_maps = [_CsrBlockMap(j_ineq_ref, structure.ineq_groups[i], structure.node_vars[i])
                   for i in range(g)]
        self._ji_idx, self._ji_mask = batch(ji_maps)
        self.per_t_map = _CsrBlockMap(j_eq_ref, structure.border_eq_rows,
                                      structure.border_vars) if nb_v else None
        self._ineq_rows = np.stack([structure.ineq_groups[i] for i in range(g)])

    def factor(self, w0, sigma_ineq, j_eq, j_ineq, delta_x, delta_c,
               u_aux=None, m_aux=None):
        """Factor the KKT matrix; raises FactorizationError on breakdown.

        Args:
            w0: positive diagonal of the condensed primal block (barrier +
                quasi-Newton base), length n.
            sigma_ineq: positive inequality pivots y_I/s per inequality row.
            j_eq, j_ineq: CSR Jacobians with the reference patterns.
            delta_x, delta_c: Levenberg regularization of primal/dual blocks.
        """
        st = self.structure
        g = self.n_groups
        eq_data = j_eq.data
        ineq_data = j_ineq.data
        nb_v = len(st.border_vars)
        nb_e = len(st.border_eq_rows)
        k2 = u_aux.shape[1] if u_aux is not None else 0
        nb = nb_v + nb_e + k2
        border = np.zeros((nb, nb))
        if nb_v:
            border[:nb_v, :nb_v] = np.diag(w0[st.border_vars] + delta_x)
            if nb_e:
                pt = self.per_t_map.gather(eq_data)
                border[nb_v:nb_v + nb_e, :nb_v] = pt
                border[:nb_v, nb_v:nb_v + nb_e] = pt.T
        if nb_e:
            border[nb_v:nb_v + nb_e, nb_v:nb_v + nb_e] = -delta_c * np.eye(nb_e)
        if k2:
            border[nb_v + nb_e:, nb_v + nb_e:] = m_aux
            if nb_v:
                ub = u_aux[st.border_vars]
                border[:nb_v, nb_v + nb_e:] = ub
                border[nb_v + nb_e:, :nb_v] = ub.T

        # one vectorized gather per family, then a sequential block sweep
        a_all = eq_data[self._a_idx] * self._a_mask
        b_all = eq_data[self._b_idx] * self._b_mask
        t_all = eq_data[self._t_idx] * self._t_mask if self._t_idx is not None else None
        per_all = eq_data[self._per_idx] * self._per_mask
        ji_all = ineq_data[self._ji_idx] * self._ji_mask
        sig_all = sigma_ineq[self._ineq_rows]
        w_all = np.einsum("gip,gi,giq->gpq", ji_all, sig_all, ji_all)

        self._blocks = []
        self._border_dim = nb
        self._nb_v, self._nb_e, self._k2 = nb_v, nb_e, k2
        carry = None
        carry_border = None
        pos = neg = 0
        for i in range(g):
            vars_i = st.node_vars[i]
            p = vars_i.size
            e = st.eq_groups[i].size if i < g - 1 else 0
            w_blk = w_all[i]
            w_blk[np.diag_indices(p)] += w0[vars_i] + delta_x
            if carry is not None:
                w_blk += carry
            a_blk = a_all[i] if e else np.zeros((0, p))
            r_blk = np.zeros((nb, p + e))
            if nb_e:
                r_blk[nb_v:nb_v + nb_e, :p] = per_all[i]
            if k2:
                r_blk[nb_v + nb_e:, :p] = u_aux[vars_i].T
            if nb_v and e:
                r_blk[:nb_v, p:] = t_all[i].T
            if carry_border is not None:
                r_blk[:, :p] += carry_border
            try:
                np.linalg.cholesky(w_blk)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(f"primal block {i} not positive definite") from exc
            w_inv = np.linalg.inv(w_blk)
            pos += p
            if e:
                u_blk = w_inv @ a_blk.T
                s_eq = delta_c * np.eye(e) + a_blk @ u_blk
                try:
                    np.linalg.cholesky(s_eq)
                except np.linalg.LinAlgError as exc:
                    raise FactorizationError(f"dual block {i} breakdown") from exc
                s_inv = np.linalg.inv(s_eq)
                neg += e
                usi = u_blk @ s_inv
                inv = np.empty((p + e, p + e))
                inv[:p, :p] = w_inv - usi @ u_blk.T
                inv[:p, p:] = usi
                inv[p:, :p] = usi.T
                inv[p:, p:] = -s_inv
            else:
                inv = w_inv
            blk = _NodeFactor(p, e)
            blk.inv = inv
            self._blocks.append(blk)
            if i < g - 1:
                c_t = np.zeros((p + e, b_all[i].shape[1]))
                c_t[p:, :] = b_all[i]
                kinv_ct = inv @ c_t
                carry = -c_t.T @ kinv_ct
                border -= r_blk @ (inv @ r_blk.T)
                carry_border = -r_blk @ kinv_ct
                blk.c_t = c_t
            else:
                border -= r_blk @ (inv @ r_blk.T)
                blk.c_t = None
            blk.r_blk = r_blk
        if nb:
            lu, d, perm = sla.ldl(border, lower=True)
            bpos, bneg, bzero = inertia_of_ldl_d(d)
            if bzero:
                raise FactorizationError("singular border block")
            lower = lu[perm]
            if lower.shape[0] and abs(np.diag(lower) - 1.0).max() > 1e-10:
                raise FactorizationError("border LDL not unit lower")
            self._border = (lower, d, perm)
            pos += bpos
            neg += bneg
        else:
            self._border = None
        self.inertia = (pos, neg, 0)
        return self

    def solve(self, rhs_z, rhs_eq):
        """Solve for (dz, q) given primal and equality right-hand sides."""
        st = self.structure
        g = self.n_groups
        nb_v, nb_e, k2 = self._nb_v, self._nb_e, self._k2
        b_border = np.zeros(self._border_dim)
        if nb_v:
            b_border[:nb_v] = rhs_z[st.border_vars]
        if nb_e:
            b_border[nb_v:nb_v + nb_e] = rhs_eq[st.border_eq_rows]
        b_blocks = []
        for i in range(g):
            vars_i = st.node_vars[i]
            eq_i = st.eq_groups[i] if i < g - 1 else np.empty(0, dtype=np.int64)
            b_blocks.append(np.concatenate([rhs_z[vars_i], rhs_eq[eq_i]]))
        # forward sweep
        y_blocks = []
        for i, blk in enumerate(self._blocks):
            y_i = blk.inv @ b_blocks[i]
            y_blocks.append(y_i)
            if blk.c_t is not None:
                b_blocks[i + 1][: blk.c_t.shape[1]] -= blk.c_t.T @ y_i
            b_border -= blk.r_blk @ y_i
        # border solve
        if self._border is not None:
            lower, d, perm = self._border
            bp = b_border[perm]
            t1 = sla.solve_triangular(lower, bp, lower=True, unit_diagonal=True)
            t2 = _solve_block_diag(d, t1)
            t3 = sla.solve_triangular(lower.T, t2, lower=False, unit_diagonal=True)
            x_border = np.empty_like(b_border)
            x_border[perm] = t3
        else:
            x_border = b_border
        # backward sweep
        x_blocks = [None] * g
        nxt = None
        for i in range(g - 1, -1, -1):
            blk = self._blocks[i]
            rhs = b_blocks[i].copy()
            rhs -= blk.r_blk.T @ x_border
            if blk.c_t is not None and nxt is not None:
                rhs -= blk.c_t @ nxt[: blk.c_t.shape[1]]
            x_i = blk.inv @ rhs
            x_blocks[i] = x_i
            nxt = x_i
        dz = np.zeros_like(rhs_z)
        q = np.zeros_like(rhs_eq)
        for i in range(g):
            vars_i = st.node_vars[i]
            p = vars_i.size
            dz[vars_i] = x_blocks[i][:p]
            if i < g - 1:
                q[st.eq_groups[i]] = x_blocks[i][p:]
        if nb_v:
            dz[st.border_vars] = x_border[:nb_v]
        if nb_e:
            q[st.border_eq_rows] = x_border[nb_v:nb_v + nb_e]
        return dz, q


class _NodeFactor:
    """Explicit inverse of one eliminated quasidefinite node block."""

    __slots__ = ("p", "e", "inv", "c_t", "r_blk")

    def __init__(self, p, e):
        self.p, self.e = p, e
