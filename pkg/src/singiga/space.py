"""Hierarchical mapped spline space on the triangle.

The parameter-domain basis is

* singular block: ``b^n_i(s) * B^{i-1}_j(t)`` for ``1 <= i <= p+1``, ``1 <= j <= i``
* level-m block (``m = 1..n``): ``b^n_i(s) * b^m_j(t)`` for
  ``p + 2^(m-1) + 1 <= i <= p + 2^m`` and ``1 <= j <= 2^m + p``

and every function is pulled to the triangle by ``(u, v) -> (u, v/u)``.
Derivatives with respect to ``(u, v)`` follow from the chain rule

    d/du = d/ds - (t/s) d/dt,     d/dv = (1/s) d/dt.

Derivative components are ordered ``[f, f_u, f_v, f_uu, f_uv, f_vv]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import comb, factorial

import numpy as np
import scipy.sparse as sp

from .spline_core import SplineSpace, bernstein_all, gauss_legendre

VERTEX_GUARD = 1e-14

# multi-indices (a_u, a_v) in component order
MULTI_INDICES = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def n_components(order):
    return {0: 1, 1: 3, 2: 6}[order]


def component_index(alpha):
    return MULTI_INDICES.index(tuple(alpha))


def m_of_index(i, p):
    """t-direction level of the block that contains s-index ``i`` (``i >= p+2``)."""
    if i <= p + 1:
        raise ValueError(f"s-index {i} lies in the singular block (i <= {p + 1})")
    return (i - p - 1).bit_length()  # == ceil(log2(i - p))


@dataclass(frozen=True)
class HierBasisFunction:
    i: int
    j: int
    block: int  # 0 for the singular block, otherwise the t-level m

    @property
    def singular(self) -> bool:
        return self.block == 0

    def t_degree(self, p):
        return self.i - 1 if self.singular else p


class HierSpace:
    """Basis of the hierarchical space at degree ``p`` and level ``n``."""

    def __init__(self, degree: int, level: int):
        if level < 0:
            raise ValueError(f"level must be >= 0, got {level}")
        self.degree = degree
        self.level = level
        self.s_space = SplineSpace(degree, level)
        p = degree
        basis = [HierBasisFunction(i, j, 0) for i in range(1, p + 2) for j in range(1, i + 1)]
        self._block_offset = {0: 0}
        for m in range(1, level + 1):
            self._block_offset[m] = len(basis)
            nt = 2**m + p
            for i in range(p + 2**(m - 1) + 1, p + 2**m + 1):
                basis.extend(HierBasisFunction(i, j, m) for j in range(1, nt + 1))
        self.basis = tuple(basis)

    def __repr__(self):
        return f"HierSpace(degree={self.degree}, level={self.level}, dimension={self.dimension})"

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @staticmethod
    def dimension_formula(p, n):
        return (p + 1) * (p + 2) // 2 + sum(2**(k - 1) * (p + 2**k) for k in range(1, n + 1))

    def block_of(self, i):
        p = self.degree
        if not 1 <= i <= self.s_space.dimension:
            raise IndexError(f"s-index {i} outside 1..{self.s_space.dimension}")
        return 0 if i <= p + 1 else m_of_index(i, p)

    def block_range(self, m):
        """Inclusive s-index range of block ``m`` (0 = singular)."""
        p = self.degree
        if m == 0:
            return 1, p + 1
        return p + 2**(m - 1) + 1, p + 2**m

    def t_space(self, m):
        return SplineSpace(self.degree, m)

    def index(self, i, j):
        """Position of ``beta_{i,j}`` in the canonical enumeration."""
        m = self.block_of(i)
        if m == 0:
            if not 1 <= j <= i:
                raise IndexError(f"singular-block index j={j} outside 1..{i}")
            return (i - 1) * i // 2 + j - 1
        nt = 2**m + self.degree
        if not 1 <= j <= nt:
            raise IndexError(f"level-{m} index j={j} outside 1..{nt}")
        i0 = self.block_range(m)[0]
        return self._block_offset[m] + (i - i0) * nt + j - 1

    @cached_property
    def _block_table(self):
        return np.array([self.block_of(i) for i in range(1, self.s_space.dimension + 1)])

    @cached_property
    def _index_lookup(self):
        return {(f.i, f.j): k for k, f in enumerate(self.basis)}

    def param_support(self, fn: HierBasisFunction):
        """Parameter support ``((s_lo, s_hi), (t_lo, t_hi))`` as Fractions."""
        s_sup = self.s_space.support(fn.i)
        if fn.singular:
            return s_sup, (Fraction(0), Fraction(1))
        return s_sup, self.t_space(fn.block).support(fn.j)

    # ------------------------------------------------------------------
    # evaluation

    def collocation(self, u, v, order=0):
        """Sparse matrices ``[M_0, ..., M_c]`` of shape ``(N, dim)``.

        ``M_k @ coeffs`` gives the k-th derivative component of the spline
        with the given coefficients at the points ``(u, v)``.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        _check_points(u, v)
        nc = n_components(order)
        rows, cols, vals = self._entries(u, v, order)
        shape = (len(u), self.dimension)
        return [sp.csr_matrix((vals[c], (rows, cols)), shape=shape) for c in range(nc)]

    def _entries(self, u, v, order):
        p = self.degree
        vertex = u < VERTEX_GUARD
        idx = np.flatnonzero(~vertex)
        s = u[idx]
        t = np.clip(v[idx] / s, 0.0, 1.0)
        spans, sders = self.s_space.eval_local(s, order)
        R, C, G = [], [], []
        for r in range(p + 1):
            i_arr = spans + 1 + r
            for i in np.unique(i_arr[i_arr <= p + 1]):
                mask = np.flatnonzero(i_arr == i)
                tders = bernstein_all(i - 1, t[mask], order)
                jcols = np.arange(i)
                base = self.index(i, 1)
                self._push(R, C, G, idx[mask], base + jcols, sders[mask, :, r], tders, order)
            reg = i_arr > p + 1
            if not np.any(reg):
                continue
            m_arr = self._block_table[i_arr - 1]
            for m in np.unique(m_arr[reg]):
                mask = np.flatnonzero(reg & (m_arr == m))
                tsp = self.t_space(int(m))
                tspans, tders = tsp.eval_local(t[mask], order)
                i0 = self.block_range(int(m))[0]
                nt = tsp.dimension
                base = self._block_offset[int(m)] + (i_arr[mask] - i0) * nt + tspans
                cols = base[:, None] + np.arange(p + 1)[None, :]
                self._push(R, C, G, idx[mask], cols, sders[mask, :, r], tders, order)
        rows = np.concatenate(R) if R else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(C) if C else np.zeros(0, dtype=np.int64)
        gvals = np.concatenate(G, axis=1) if G else np.zeros((6, 0))
        svals = s[np.searchsorted(idx, rows)] if len(rows) else np.zeros(0)
        tvals = t[np.searchsorted(idx, rows)] if len(rows) else np.zeros(0)
        vals = _chain_rule(gvals, svals, tvals, order)
        if np.any(vertex):
            vr, vc, vv = self._vertex_entries(np.flatnonzero(vertex), order)
            rows = np.concatenate([rows, vr])
            cols = np.concatenate([cols, vc])
            vals = np.concatenate([vals, vv], axis=1)
        return rows, cols, vals

    @staticmethod
    def _push(R, C, G, rows, cols, sd, td, order):
        """Record products of s-factor ``sd (N, *)`` and t-factors ``td (N, *, J)``."""
        N, J = td.shape[0], td.shape[2]
        cols = np.broadcast_to(cols, (N, J))
        sd = _pad(sd, order + 1, axis=1)
        td = _pad(td, order + 1, axis=1)
        g = np.zeros((6, N, J))
        # g_ab: a-th s-derivative times b-th t-derivative
        g[0] = sd[:, 0, None] * td[:, 0, :]
        if order >= 1:
            g[1] = sd[:, 1, None] * td[:, 0, :]
            g[2] = sd[:, 0, None] * td[:, 1, :]
        if order >= 2:
            g[3] = sd[:, 2, None] * td[:, 0, :]
            g[4] = sd[:, 1, None] * td[:, 1, :]
            g[5] = sd[:, 0, None] * td[:, 2, :]
        R.append(np.repeat(rows, J))
        C.append(cols.reshape(-1))
        G.append(g.reshape(6, -1))

    def _vertex_entries(self, rows, order):
        """Limits at the singular vertex from the polynomial form on the apex triangle."""
        nc = n_components(order)
        table = _vertex_table(self.degree, self.level)  # (dim_sing, 6)
        k = table.shape[0]
        R = np.repeat(rows, k)
        C = np.tile(np.arange(k), len(rows))
        V = np.tile(table[:, :nc].T, (1, len(rows)))
        V = np.concatenate([V, np.zeros((6 - nc, V.shape[1]))]) if nc < 6 else V
        return R, C, V

    def evaluate(self, fn, u, v, alpha=(0, 0)):
        """Derivative ``d^alpha`` of one basis function at points ``(u, v)``."""
        if isinstance(fn, HierBasisFunction):
            k = self._index_lookup[(fn.i, fn.j)]
        else:
            k = int(fn)
        order = sum(alpha)
        if order > min(self.degree, 2):
            raise ValueError(f"derivative order {order} not supported (max {min(self.degree, 2)})")
        scalar = np.ndim(u) == 0
        mats = self.collocation(u, v, order)
        out = mats[component_index(alpha)][:, k].toarray().ravel()
        return float(out[0]) if scalar else out

    def apex_polynomial(self, i, j):
        """Monomial coefficients ``c[a, b]`` of ``beta_{i,j}`` (singular block) on the apex triangle."""
        return _apex_polynomial(self.degree, self.level, i, j)


def build_hier_space(p, n) -> HierSpace:
    return HierSpace(p, n)


def eval_basis(space: HierSpace, fn, point, multi_deriv=(0, 0)):
    u, v = point
    return space.evaluate(fn, u, v, multi_deriv)


def _check_points(u, v, tol=1e-12):
    bad = (u < -tol) | (u > 1 + tol) | (v < -tol) | (v > u + tol)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"point ({u[k]}, {v[k]}) lies outside the closed triangle")


def _pad(a, size, axis):
    if a.shape[axis] >= size:
        return a
    shape = list(a.shape)
    shape[axis] = size - a.shape[axis]
    return np.concatenate([a, np.zeros(shape)], axis=axis)


def _chain_rule(g, s, t, order):
    """Convert parameter derivatives ``g = [g, g_s, g_t, g_ss, g_st, g_tt]`` to (u, v)."""
    out = np.zeros_like(g)
    out[0] = g[0]
    if order >= 1:
        out[1] = g[1] - (t / s) * g[2]
        out[2] = g[2] / s
    if order >= 2:
        s2 = s * s
        out[3] = g[3] - 2 * (t / s) * g[4] + (t * t / s2) * g[5] + 2 * (t / s2) * g[2]
        out[4] = g[4] / s - g[2] / s2 - t * g[5] / s2
        out[5] = g[5] / s2
    return out


@lru_cache(maxsize=None)
def _first_span_polys(p, n):
    """Coefficients (in s) of b^n_i on the first knot span, i = 1..p+1."""
    space = SplineSpace(p, n)
    h = space.h
    x = 0.5 * (1 - np.cos(np.pi * (np.arange(p + 1) + 0.5) / (p + 1)))  # Chebyshev in (0,1)
    _, ders = space.eval_local(x * h, 0, spans=np.zeros(p + 1, dtype=np.int64))
    V = np.vander(x, p + 1, increasing=True)
    coef_x = np.linalg.solve(V, ders[:, 0, :])  # (power, function) in scaled variable x = s/h
    return coef_x / (h ** np.arange(p + 1))[:, None]


@lru_cache(maxsize=None)
def _apex_polynomial(p, n, i, j):
    q = _first_span_polys(p, n)[:, i - 1][i - 1:]  # b_i(s) / s^(i-1)
    c = np.zeros((p + 1, p + 1))
    binom = comb(i - 1, j - 1)
    # v^(j-1) (u - v)^(i-j) = sum_r C(i-j, r) u^(i-j-r) (-v)^r v^(j-1)
    for r in range(i - j + 1):
        a0 = i - j - r
        b = j - 1 + r
        coef = binom * comb(i - j, r) * (-1) ** r
        for k, qk in enumerate(q):
            if a0 + k + b <= p:
                c[a0 + k, b] += coef * qk
    return c


@lru_cache(maxsize=None)
def _vertex_table(p, n):
    rows = []
    for i in range(1, p + 2):
        for j in range(1, i + 1):
            c = _apex_polynomial(p, n, i, j)
            row = []
            for a, b in MULTI_INDICES:
                row.append(c[a, b] * factorial(a) * factorial(b) if a <= p and b <= p else 0.0)
            rows.append(row)
    return np.array(rows)


class HierFunction:
    """A spline in the hierarchical space given by its coefficient vector."""

    def __init__(self, space: HierSpace, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape[0] != space.dimension:
            raise ValueError(f"expected {space.dimension} coefficients, got {self.coeffs.shape[0]}")

    def evaluate(self, u, v, order=0):
        mats = self.space.collocation(u, v, order)
        return np.stack([M @ self.coeffs for M in mats])

    def __call__(self, u, v):
        return self.evaluate(u, v, 0)[0]


# ----------------------------------------------------------------------
# structural property checks

def check_self_similarity(space_n: HierSpace, space_prev: HierSpace, u, v, tol=1e-12):
    """Check ``beta^n_{i,j}(u, v) == beta^{n-1}_{i,j}(2u, 2v)`` for ``i <= 2^(n-1)``.

    Returns ``(passed, max_error)``.  Points must lie in the left half triangle.
    """
    n = space_n.level
    if space_prev.level != n - 1 or space_prev.degree != space_n.degree:
        raise ValueError("spaces must share the degree and differ by one level")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u > 0.5):
        raise ValueError("sample points must lie in the left half (u <= 1/2)")
    fine = space_n.collocation(u, v)[0].tocsc()
    coarse = space_prev.collocation(2 * u, 2 * v)[0].tocsc()
    err = 0.0
    for fn in space_n.basis:
        if fn.i > 2**(n - 1):
            continue
        a = fine[:, space_n.index(fn.i, fn.j)].toarray().ravel()
        b = coarse[:, space_prev.index(fn.i, fn.j)].toarray().ravel()
        err = max(err, float(np.max(np.abs(a - b), initial=0.0)))
    return err < tol, err


def element_sample_points(element, npts=6):
    """Interior points of an element on a tensor Gauss grid in parameter space."""
    x, _ = gauss_legendre(npts)
    s0, s1, t0, t1 = (float(c) for c in element.param_rect)
    S, T = np.meshgrid(s0 + (s1 - s0) * x, t0 + (t1 - t0) * x, indexing="ij")
    S, T = S.ravel(), T.ravel()
    return S, S * T


def active_functions(space: HierSpace, element):
    """Indices of basis functions whose support overlaps the element with positive area."""
    s0, s1, t0, t1 = element.param_rect
    out = []
    for k, fn in enumerate(space.basis):
        (a, b), (c, d) = space.param_support(fn)
        if a < s1 and b > s0 and c < t1 and d > t0:
            out.append(k)
    return out


def check_polynomial_embedding(space: HierSpace, element, degree=None, npts=None):
    """Residual of least-squares fits of all monomials of total degree <= p on one element.

    Returns ``(max_residual, in_Qp)`` where ``in_Qp`` records that every active
    function has s- and t-factors of degree at most p.
    """
    p = space.degree if degree is None else degree
    npts = npts or space.degree + 3
    u, v = element_sample_points(element, npts)
    act = active_functions(space, element)
    A = space.collocation(u, v)[0][:, act].toarray()
    worst = 0.0
    for a in range(p + 1):
        for b in range(p + 1 - a):
            y = u**a * v**b
            c, *_ = np.linalg.lstsq(A, y, rcond=None)
            worst = max(worst, float(np.max(np.abs(A @ c - y))))
    in_qp = all(space.basis[k].t_degree(space.degree) <= space.degree for k in act)
    return worst, in_qp


def param_grid_points(level, npts):
    """Gauss points on every cell of the uniform level-``level`` grid in (s, t), mapped to the triangle.

    Every hierarchical element at that level is a union of such cells, so the
    grid samples all elements.
    """
    x, _ = gauss_legendre(npts)
    N = 2**level
    g = (np.arange(N)[:, None] + x[None, :]).ravel() / N
    S, T = np.meshgrid(g, g, indexing="ij")
    S, T = S.ravel(), T.ravel()
    return S, S * T


def least_squares_fit(space: HierSpace, f, npts=None):
    """Dense discrete least-squares coefficients of ``f(u, v)`` in ``space``.

    Used as an independent oracle (and for coarse levels where the quasi-
    interpolant is not defined).  Returns ``(coeffs, max_residual)``.
    """
    npts = npts or space.degree + 2
    u, v = param_grid_points(space.level, npts)
    A = space.collocation(u, v)[0].toarray()
    y = np.asarray(f(u, v), dtype=float)
    c, *_ = np.linalg.lstsq(A, y, rcond=None)
    return c, float(np.max(np.abs(A @ c - y)))
