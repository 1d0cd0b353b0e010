"""Forward-mode automatic differentiation on batched dual arrays.

A :class:`Dual` carries an array of values together with a block of tangent
(directional derivative) columns, so one evaluation of a vectorized callback
propagates many seed directions at once.  Jacobians of sparse callbacks are
recovered from a compressed seeding computed by structural column coloring.

Only the primitives implemented here are differentiable; anything else
(e.g. calling a raw numpy ufunc on a ``Dual``) raises immediately rather
than silently falling back to finite differences.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse


class UnsupportedPrimitiveError(TypeError):
    """A callback used an operation the derivative engine does not support."""


class PatternViolationError(ValueError):
    """A Jacobian entry outside the declared sparsity pattern is nonzero."""


class Dual:
    """Array of first-order dual numbers.

    Attributes:
        val: value array, arbitrary shape ``S``.
        dot: tangent array of shape ``S + (k,)`` holding ``k`` seed directions.
    """

    __slots__ = ("val", "dot")
    # Refuse numpy ufunc dispatch: unsupported primitives must fail loudly.
    __array_ufunc__ = None

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)
        if self.dot.shape[: self.val.ndim] != self.val.shape:
            raise ValueError(
                f"tangent shape {self.dot.shape} does not extend value shape {self.val.shape}"
            )

    @property
    def nseeds(self):
        return self.dot.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual(val={self.val!r}, nseeds={self.nseeds})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        other = np.asarray(other, dtype=float)
        return Dual(self.val + other, np.broadcast_to(
            self.dot, np.broadcast_shapes(self.val.shape, other.shape) + (self.nseeds,)).copy())

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __sub__(self, other):
        return self.__add__(-other if isinstance(other, Dual) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self).__add__(np.asarray(other, dtype=float))

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.dot * other.val[..., None] + other.dot * self.val[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.dot * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            return Dual(val, (self.dot - other.dot * val[..., None]) * inv[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.dot / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other, dtype=float)
        inv = 1.0 / self.val
        val = other * inv
        return Dual(val, -self.dot * (val * inv)[..., None])

    def __pow__(self, expo):
        if isinstance(expo, Dual):
            raise UnsupportedPrimitiveError("dual exponents are not supported; use exp/log")
        expo = float(expo)
        val = self.val ** expo
        return Dual(val, (expo * self.val ** (expo - 1.0))[..., None] * self.dot)

    # -- structural ops -----------------------------------------------------

    def __getitem__(self, idx):
        # Seed axis is last, so any indexing of the value axes applies verbatim.
        return Dual(self.val[idx], self.dot[idx])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Dual(self.val.reshape(shape), self.dot.reshape(shape + (self.nseeds,)))

    def ravel(self):
        return self.reshape((self.val.size,))


def value(x):
    """Value part of a Dual, or the input unchanged."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def seed(z, seed_matrix):
    """Wrap a decision vector with explicit seed directions (columns)."""
    z = np.asarray(z, dtype=float)
    seed_matrix = np.asarray(seed_matrix, dtype=float)
    return Dual(z, seed_matrix)


def _unary(x, f, df):
    if isinstance(x, Dual):
        return Dual(f(x.val), df(x.val)[..., None] * x.dot)
    return f(np.asarray(x, dtype=float))


def sin(x):
    return _unary(x, np.sin, np.cos)


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v))


def tan(x):
    return _unary(x, np.tan, lambda v: 1.0 / np.cos(v) ** 2)


def sqrt(x):
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))


def exp(x):
    return _unary(x, np.exp, np.exp)


def log(x):
    return _unary(x, np.log, lambda v: 1.0 / v)


def smooth_pos(x, width):
    """C1 hinge approximating max(x, 0).

    Exact for |x| >= width; quadratic blend of half-width ``width`` at the
    kink.  The blend keeps interior-point callbacks continuously
    differentiable without moving values far from the kink.
    """
    w = float(width)
    if w <= 0.0:
        raise ValueError("blend width must be positive")
    v = value(x)
    mid = (v + w) ** 2 / (4.0 * w)
    val = np.where(v >= w, v, np.where(v <= -w, 0.0, mid))
    if not isinstance(x, Dual):
        return val
    slope = np.where(v >= w, 1.0, np.where(v <= -w, 0.0, (v + w) / (2.0 * w)))
    return Dual(val, slope[..., None] * x.dot)


def smooth_max(a, b, width):
    """C1 approximation of max(a, b), exact when |a - b| >= width."""
    return a + smooth_pos(b - a, width) if isinstance(a, Dual) or isinstance(b, Dual) \
        else np.asarray(a, dtype=float) + smooth_pos(np.asarray(b) - np.asarray(a), width)


def smooth_min(a, b, width):
    """C1 approximation of min(a, b), exact when |a - b| >= width."""
    return -smooth_max(-a if isinstance(a, Dual) else -np.asarray(a, dtype=float),
                       -b if isinstance(b, Dual) else -np.asarray(b, dtype=float), width)


def smooth_clamp(x, lo, hi, width):
    """C1 approximation of min(max(x, lo), hi)."""
    return smooth_min(smooth_max(x, lo, width), hi, width)


def asum(x, axis=None):
    """Sum over value axes (never over the seed axis)."""
    if not isinstance(x, Dual):
        return np.sum(np.asarray(x, dtype=float), axis=axis)
    if axis is None:
        return Dual(x.val.sum(), x.dot.reshape(-1, x.nseeds).sum(axis=0))
    return Dual(x.val.sum(axis=axis), x.dot.sum(axis=axis if axis >= 0 else axis - 1))


def concat(parts):
    """Concatenate scalar/1-d Duals/arrays into one 1-d result."""
    if not any(isinstance(p, Dual) for p in parts):
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])
    k = next(p.nseeds for p in parts if isinstance(p, Dual))
    vals, dots = [], []
    for p in parts:
        if isinstance(p, Dual):
            vals.append(np.atleast_1d(p.val))
            dots.append(p.dot.reshape(np.atleast_1d(p.val).shape + (k,)))
        else:
            v = np.atleast_1d(np.asarray(p, dtype=float))
            vals.append(v)
            dots.append(np.zeros(v.shape + (k,)))
    return Dual(np.concatenate(vals), np.concatenate(dots, axis=0))


class SparsityPattern:
    """Structural nonzero positions of a Jacobian.

    The pattern may be a superset of the true nonzeros.  Coloring and entry
    extraction are deterministic for a fixed construction order.
    """

    def __init__(self, rows, cols, shape):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.rows.size and (self.rows.max() >= shape[0] or self.cols.max() >= shape[1]):
            raise ValueError("pattern index out of range")
        self._colors = None

    @classmethod
    def dense(cls, m, n):
        rr, cc = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        return cls(rr.ravel(), cc.ravel(), (m, n))

    @property
    def nnz(self):
        return self.rows.size

    def column_colors(self):
        """Greedy distance-2 coloring: columns sharing a row get distinct colors.

        Returns (colors, n_colors).  Columns untouched by any row share color 0.
        """
        if self._colors is not None:
            return self._colors
        m, n = self.shape
        order = np.lexsort((self.cols, self.rows))
        rows_s, cols_s = self.rows[order], self.cols[order]
        row_start = np.searchsorted(rows_s, np.arange(m + 1))
        col_entries = [[] for _ in range(n)]
        for r, c in zip(rows_s, cols_s):
            col_entries[c].append(r)
        colors = np.full(n, -1, dtype=np.int64)
        row_color_used = [set() for _ in range(m)]
        for c in range(n):
            used = set()
            for r in col_entries[c]:
                used |= row_color_used[r]
            g = 0
            while g in used:
                g += 1
            colors[c] = g
            for r in col_entries[c]:
                row_color_used[r].add(g)
        ncolors = int(colors.max()) + 1 if n else 0
        self._colors = (colors, max(ncolors, 1))
        return self._colors


def gradient(f, z):
    """Exact forward-mode gradient of a scalar callback at z."""
    z = np.asarray(z, dtype=float)
    out = f(seed(z, np.eye(z.size)))
    if not isinstance(out, Dual):
        raise UnsupportedPrimitiveError("callback did not propagate dual numbers")
    if out.val.shape not in ((), (1,)):
        raise ValueError("gradient() expects a scalar callback")
    return out.dot.reshape(z.size)


def jacobian(g, z, pattern, check=False):
    """Sparse Jacobian of a vector callback via compressed seeding.

    Args:
        g: callback mapping a (Dual) vector of length n to a vector of length m.
        z: evaluation point.
        pattern: :class:`SparsityPattern` covering the true nonzeros.
        check: evaluate with full identity seeds and fail on any entry
            outside the pattern larger than 1e-12 (slow; debugging only).

    Returns:
        ``scipy.sparse.csr_matrix`` with values at the pattern positions.
    """
    z = np.asarray(z, dtype=float)
    m, n = pattern.shape
    if z.size != n:
        raise ValueError(f"point has length {z.size}, pattern expects {n}")
    if check:
        dense = g(seed(z, np.eye(n))).dot
        mask = np.zeros((m, n), dtype=bool)
        mask[pattern.rows, pattern.cols] = True
        stray = np.abs(np.where(mask, 0.0, dense))
        if stray.max(initial=0.0) > 1e-12:
            r, c = np.unravel_index(np.argmax(stray), stray.shape)
            raise PatternViolationError(
                f"Jacobian entry ({r},{c})={dense[r, c]:.3e} outside declared pattern")
        vals = dense[pattern.rows, pattern.cols]
    else:
        colors, k = pattern.column_colors()
        seeds = np.zeros((n, k))
        seeds[np.arange(n), colors] = 1.0
        out = g(seed(z, seeds))
        if not isinstance(out, Dual):
            raise UnsupportedPrimitiveError("callback did not propagate dual numbers")
        compressed = out.dot.reshape(m, k)
        vals = compressed[pattern.rows, colors[pattern.cols]]
    return sparse.csr_matrix((vals, (pattern.rows, pattern.cols)), shape=(m, n))
