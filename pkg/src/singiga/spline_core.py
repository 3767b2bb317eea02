"""Univariate uniform B-splines, Bernstein polynomials and local dual functionals.

Indices are 1-based throughout, matching the usual notation ``b^n_i`` for
``i = 1, ..., 2^n + p``.  Vectorized routines return values for the ``p+1``
functions that are active on the knot span containing each point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np


def gauss_legendre(order):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class SplineSpace:
    """Uniform open-knot B-spline space of degree ``p`` on [0, 1] at dyadic level ``n``."""

    degree: int
    level: int

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")

    @property
    def nspans(self) -> int:
        return 2**self.level

    @property
    def mesh_size(self) -> Fraction:
        return Fraction(1, self.nspans)

    @property
    def h(self) -> float:
        return 1.0 / self.nspans

    @property
    def dimension(self) -> int:
        return self.nspans + self.degree

    @property
    def knots(self) -> np.ndarray:
        p, N = self.degree, self.nspans
        inner = np.arange(1, N) / N
        return np.concatenate([np.zeros(p + 1), inner, np.ones(p + 1)])

    def support(self, i):
        """Support of ``b_i`` as an exact interval ``(lo, hi)`` of Fractions."""
        self._check_index(i)
        p, N = self.degree, self.nspans
        return Fraction(max(0, i - p - 1), N), Fraction(min(N, i), N)

    def span_range(self, i):
        """0-based span indices ``(first, last)`` covered by ``supp b_i``."""
        self._check_index(i)
        p, N = self.degree, self.nspans
        return max(0, i - p - 1), min(N, i) - 1

    def span_index(self, s):
        """0-based knot span of each point; right-sided, except at s=1."""
        s = np.asarray(s, dtype=float)
        a = np.floor(s * self.nspans).astype(np.int64)
        return np.clip(a, 0, self.nspans - 1)

    def _check_index(self, i):
        if not 1 <= i <= self.dimension:
            raise IndexError(f"B-spline index {i} outside 1..{self.dimension}")

    def eval_local(self, s, nders=0, spans=None):
        """Values and derivatives of the active B-splines.

        Returns ``(spans, ders)`` where ``ders`` has shape ``(N, nders+1, p+1)``
        and ``ders[:, k, r]`` is the k-th derivative of ``b_{span+1+r}``.
        """
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if spans is None:
            spans = self.span_index(s)
        return spans, _local_basis_ders(self.knots, self.degree, spans + self.degree, s, nders)

    def eval(self, i, s, deriv_order=0):
        """``deriv_order``-th derivative of ``b_i`` at ``s`` (array or scalar)."""
        self._check_index(i)
        if deriv_order < 0 or deriv_order > self.degree:
            raise ValueError(f"derivative order must be in 0..{self.degree}, got {deriv_order}")
        scalar = np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        spans, ders = self.eval_local(s, deriv_order)
        r = i - 1 - spans
        ok = (r >= 0) & (r <= self.degree)
        out = np.zeros(len(s))
        out[ok] = ders[ok, deriv_order, r[ok]]
        return float(out[0]) if scalar else out


def _local_basis_ders(knots, p, ell, s, nders):
    """Cox-de Boor triangle plus derivative recursion, vectorized over points.

    ``ell`` holds the 0-based knot index with ``knots[ell] <= s < knots[ell+1]``.
    """
    N = len(s)
    # tables[q][:, r] = N_{ell-q+r, q}(s)
    tables = [np.ones((N, 1))]
    left = np.empty((N, p + 1))
    right = np.empty((N, p + 1))
    for q in range(1, p + 1):
        left[:, q] = s - knots[ell + 1 - q]
        right[:, q] = knots[ell + q] - s
        prev = tables[-1]
        cur = np.empty((N, q + 1))
        saved = np.zeros(N)
        for r in range(q):
            temp = prev[:, r] / (right[:, r + 1] + left[:, q - r])
            cur[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, q - r] * temp
        cur[:, q] = saved
        tables.append(cur)

    nders = min(nders, p)
    out = np.zeros((N, nders + 1, p + 1))
    out[:, 0, :] = tables[p]
    for k in range(1, nders + 1):
        # start from degree p-k values and raise degree k times
        vals = tables[p - k]
        for q in range(p - k + 1, p + 1):
            vals = _raise_derivative(knots, q, ell, vals)
        out[:, k, :] = vals
    return out


def _raise_derivative(knots, q, ell, lower):
    """Map degree q-1 local coefficients to the derivative of degree q functions."""
    N = lower.shape[0]
    res = np.zeros((N, q + 1))
    for r in range(q + 1):
        if r >= 1:
            den = knots[ell + r] - knots[ell - q + r]
            res[:, r] += q * lower[:, r - 1] / den
        if r <= q - 1:
            den = knots[ell + r + 1] - knots[ell - q + r + 1]
            res[:, r] -= q * lower[:, r] / den
    return res


def eval_bspline(space: SplineSpace, i: int, s, deriv_order: int = 0):
    return space.eval(i, s, deriv_order)


@dataclass(frozen=True)
class BernsteinBasis:
    """Bernstein polynomials of degree ``d`` on [0, 1], indexed ``j = 1..d+1``."""

    degree: int

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"Bernstein degree must be >= 0, got {self.degree}")

    @property
    def dimension(self) -> int:
        return self.degree + 1

    def eval_all(self, t, nders=0):
        """Array ``(N, nders+1, d+1)`` of all functions and derivatives."""
        return bernstein_all(self.degree, t, nders)

    def eval(self, j, t, deriv_order=0):
        if not 1 <= j <= self.dimension:
            raise IndexError(f"Bernstein index {j} outside 1..{self.dimension}")
        scalar = np.ndim(t) == 0
        vals = bernstein_all(self.degree, np.atleast_1d(t), deriv_order)[:, deriv_order, j - 1]
        return float(vals[0]) if scalar else vals


def eval_bernstein(basis: BernsteinBasis, j: int, t, deriv_order: int = 0):
    return basis.eval(j, t, deriv_order)


def bernstein_all(d, t, nders=0):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    N = len(t)
    # de Casteljau-style table of all lower degrees
    tables = [np.ones((N, 1))]
    for q in range(1, d + 1):
        prev = tables[-1]
        cur = np.zeros((N, q + 1))
        cur[:, :q] += (1.0 - t)[:, None] * prev
        cur[:, 1:] += t[:, None] * prev
        tables.append(cur)
    out = np.zeros((N, nders + 1, d + 1))
    out[:, 0, :] = tables[d]
    for k in range(1, min(nders, d) + 1):
        low = tables[d - k]
        fac = factorial(d) // factorial(d - k)
        acc = np.zeros((N, d + 1))
        for i in range(k + 1):
            c = (-1) ** (k - i) * comb(k, i)
            # shift: B^{d-k}_{r-i}
            acc[:, i:i + d - k + 1] += c * low
        out[:, k, :] = fac * acc
    return out


@dataclass(frozen=True)
class UnivariateDual:
    """Locally supported L2 dual functional ``lambda_k`` of a spline space.

    The functional is ``f -> int_{span} f(s) w(s) ds`` where ``w`` is a
    combination of the ``p+1`` B-splines active on one knot span.
    """

    space: SplineSpace
    index: int
    span: int
    weight_coefficients: np.ndarray = field(repr=False)

    @property
    def support_interval(self):
        return Fraction(self.span, self.space.nspans), Fraction(self.span + 1, self.space.nspans)

    def weight(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        spans = np.full(len(s), self.span)
        _, ders = self.space.eval_local(s, 0, spans=spans)
        lo, hi = (float(x) for x in self.support_interval)
        inside = (s >= lo) & (s <= hi)
        return np.where(inside, ders[:, 0, :] @ self.weight_coefficients, 0.0)

    def quadrature(self, order):
        """Nodes and weights realizing the functional by Gauss quadrature."""
        x, w = gauss_legendre(order)
        h = self.space.h
        nodes = (self.span + x) * h
        return nodes, w * h * self.weight(nodes)

    def apply(self, f, order=None):
        order = order or self.space.degree + 1
        nodes, weights = self.quadrature(order)
        return float(np.dot(weights, f(nodes)))

    def l2_norm(self):
        """L2 norm of the weight function (bound of the functional on L2)."""
        x, w = gauss_legendre(self.space.degree + 1)
        h = self.space.h
        vals = self.weight((self.span + x) * h)
        return float(np.sqrt(np.dot(w * h, vals**2)))


def dual_span(space: SplineSpace, k: int) -> int:
    """Middle knot span of ``supp b_k``; ties go to the left."""
    first, last = space.span_range(k)
    return first + (last - first) // 2


@lru_cache(maxsize=None)
def build_univariate_dual(space: SplineSpace, k: int) -> UnivariateDual:
    span = dual_span(space, k)
    p = space.degree
    x, w = gauss_legendre(p + 1)
    h = space.h
    nodes = (span + x) * h
    _, ders = space.eval_local(nodes, 0, spans=np.full(len(nodes), span))
    vals = ders[:, 0, :]
    gram = (vals * (w * h)[:, None]).T @ vals
    if np.linalg.cond(gram) > 1e12:
        raise ArithmeticError(f"singular local Gram matrix for b_{k} on span {span}")
    r = k - 1 - span  # local slot of b_k on the span
    e = np.zeros(p + 1)
    e[r] = 1.0
    coeffs = np.linalg.solve(gram, e)  # gram is symmetric: row r of its inverse
    return UnivariateDual(space, k, span, coeffs)
