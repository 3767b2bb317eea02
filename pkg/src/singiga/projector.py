"""Dual functionals and the quasi-interpolation projector onto the hierarchical space.

Two kinds of functionals are used:

* ``scaled_singular`` (``k <= p+1``): ``phi -> mu_{k,l}(phi o cI)`` with
  ``c = 2^(n0 - n)``, where ``mu`` is dual to the singular block on the apex
  triangle at the coarse level ``n0 = ceil(log2(8p))``.
* ``tensor`` (``k >= p+2``): ``lambda^n_k (x) lambda^m_l`` applied to ``phi o u``,
  with ``m`` the t-level of the block containing ``k``.

Each functional is realized as a weighted sum over quadrature nodes, and all
of them together form one sparse ``(dim, nodes)`` matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import GramConditioningError, LevelError
from .space import HierFunction, HierSpace, m_of_index
from .spline_core import SplineSpace, build_univariate_dual, gauss_legendre

GRAM_COND_LIMIT = 1e12


def coarse_level_n0(p):
    """``ceil(log2(8 p))`` in integer arithmetic."""
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    return (8 * p - 1).bit_length()


def m_of_k(k, p, paper_literal=False):
    """t-level used by the tensor dual of s-index ``k``.

    The default ``ceil(log2(k - p))`` agrees with the block ranges of the
    basis; ``paper_literal`` selects ``ceil(log2(k - p + 1))``.
    """
    if k <= p + 1:
        raise ValueError(f"k={k} belongs to the singular block and has no t-level")
    if paper_literal:
        return (k - p).bit_length()
    return m_of_index(k, p)


def _as_values(f, u, v):
    if hasattr(f, "evaluate"):
        return f.evaluate(u, v, 0)[0]
    return np.asarray(f(u, v), dtype=float)


@dataclass(frozen=True)
class SingularDualSet:
    """Duals ``mu_{k,l}`` of the singular block on the apex triangle at level ``n0``."""

    degree: int
    n0: int
    gram: np.ndarray
    gram_inverse: np.ndarray
    condition_number: float
    s_nodes: np.ndarray
    t_nodes: np.ndarray
    weights: np.ndarray  # (n_singular, Q): mu_{k,l}(phi) = weights[row] @ phi(nodes)

    @property
    def h0(self):
        return Fraction(1, 2**self.n0)

    @property
    def u_nodes(self):
        return self.s_nodes

    @property
    def v_nodes(self):
        return self.s_nodes * self.t_nodes

    def apply(self, f, scale=1.0):
        """All ``mu_{k,l}(f o scale I)`` as a vector in singular-block order."""
        return self.weights @ _as_values(f, scale * self.u_nodes, scale * self.v_nodes)


@lru_cache(maxsize=None)
def build_singular_duals(p, quad_order=None) -> SingularDualSet:
    n0 = coarse_level_n0(p)
    q = quad_order or p + 3
    space = HierSpace(p, n0)
    nsing = (p + 1) * (p + 2) // 2
    x, w = gauss_legendre(q)
    h0 = 1.0 / 2**n0
    X, Y = np.meshgrid(x, x, indexing="ij")
    S = (h0 * X).ravel()
    T = Y.ravel()
    W = (h0 * np.outer(w, w)).ravel() * S
    B = space.collocation(S, S * T)[0][:, :nsing].toarray()
    gram = (B * W[:, None]).T @ B
    cond = float(np.linalg.cond(gram))
    if cond > GRAM_COND_LIMIT:
        raise GramConditioningError(f"singular Gram matrix for p={p} has condition number {cond:.3e}")
    ginv = np.linalg.inv(gram)
    weights = ginv @ (B * W[:, None]).T
    return SingularDualSet(p, n0, gram, ginv, cond, S, T, weights)


@dataclass(frozen=True)
class DualFunctional:
    """A quadrature-realized functional ``Lambda_{k,l}``."""

    kind: str  # "scaled_singular" or "tensor"
    k: int
    l: int
    scale: float  # c = 2^(n0-n) for scaled_singular, 1 for tensor
    u: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    support: tuple  # parameter rectangle (s0, s1, t0, t1) holding all nodes

    def apply(self, f):
        return float(self.weights @ _as_values(f, self.u, self.v))


def apply_dual(dual: DualFunctional, f):
    return dual.apply(f)


class HierProjector:
    """Quasi-interpolant ``Pi(phi) = sum Lambda_{k,l}(phi) beta_{k,l}`` for one space."""

    def __init__(self, space: HierSpace, quad_order=None, paper_literal_mk=False):
        p, n = space.degree, space.level
        self.n0 = coarse_level_n0(p)
        if n < self.n0:
            raise LevelError(f"level {n} is below the coarse level n0={self.n0} for degree {p}")
        self.space = space
        self.quad_order = quad_order or p + 3
        self.paper_literal_mk = paper_literal_mk
        self.singular = build_singular_duals(p, self.quad_order)
        self.duals = self._build_duals()
        self.node_u = np.concatenate([d.u for d in self.duals])
        self.node_v = np.concatenate([d.v for d in self.duals])
        rows = np.concatenate([np.full(len(d.u), r) for r, d in enumerate(self.duals)])
        data = np.concatenate([d.weights for d in self.duals])
        self.matrix = sp.csr_matrix(
            (data, (rows, np.arange(len(rows)))), shape=(space.dimension, len(rows)))

    def _build_duals(self):
        sp_ = self.space
        p, n = sp_.degree, sp_.level
        c = 2.0 ** (self.n0 - n)
        h = Fraction(1, 2**n)
        duals = []
        for r, fn in enumerate(sp_.basis):
            k, l = fn.i, fn.j
            if fn.singular:
                row = sp_.index(k, l)  # singular-block ordering coincides with basis ordering
                duals.append(DualFunctional(
                    "scaled_singular", k, l, c,
                    c * self.singular.u_nodes, c * self.singular.v_nodes,
                    self.singular.weights[row], (Fraction(0), h, Fraction(0), Fraction(1))))
                continue
            m = m_of_k(k, p, self.paper_literal_mk)
            lam_s = build_univariate_dual(sp_.s_space, k)
            lam_t = build_univariate_dual(SplineSpace(p, m), l)
            s_nodes, s_w = lam_s.quadrature(self.quad_order)
            t_nodes, t_w = lam_t.quadrature(self.quad_order)
            S, T = np.meshgrid(s_nodes, t_nodes, indexing="ij")
            W = np.outer(s_w, t_w)
            duals.append(DualFunctional(
                "tensor", k, l, 1.0, S.ravel(), (S * T).ravel(), W.ravel(),
                lam_s.support_interval + lam_t.support_interval))
        return duals

    def dual(self, k, l):
        return self.duals[self.space.index(k, l)]

    def coefficients_from_values(self, values):
        """Coefficients from function values at ``(node_u, node_v)``; values may be ``(N, K)``."""
        return self.matrix @ values

    def coefficients(self, f):
        return self.coefficients_from_values(_as_values(f, self.node_u, self.node_v))

    def project(self, f):
        return ProjectionResult(self.space, self.coefficients(f), f)

    @cached_property
    def duality_matrix(self):
        """Dense ``[Lambda_r(beta_c)]``."""
        B = self.space.collocation(self.node_u, self.node_v)[0]
        return (self.matrix @ B).toarray()


class ProjectionResult(HierFunction):
    def __init__(self, space, coeffs, source=None):
        super().__init__(space, coeffs)
        self.source = source


def project(space: HierSpace, f, quad_order=None):
    return HierProjector(space, quad_order).project(f)


# ----------------------------------------------------------------------
# physical domain


class MappedProjection:
    """``Pi_V(phi) = Pi((phi o F) F0) / F0``, represented through its pullback to the triangle."""

    def __init__(self, geom, projector: HierProjector, coeffs):
        self.geom = geom
        self.projector = projector
        self.inner = HierFunction(projector.space, coeffs)

    @property
    def coeffs(self):
        return self.inner.coeffs

    def evaluate(self, u, v, order=0, smp=None):
        """Pullback ``(Pi_V phi) o F`` and its (u, v)-gradient."""
        if order > 1:
            raise ValueError("mapped projections provide derivatives up to order 1")
        smp = smp or self.geom.sample(u, v, 1)
        g = self.inner.evaluate(u, v, order)
        w = smp.weight
        out = np.empty_like(g)
        out[0] = g[0] / w[0]
        if order == 1:
            out[1] = (g[1] * w[0] - g[0] * w[1]) / w[0] ** 2
            out[2] = (g[2] * w[0] - g[0] * w[2]) / w[0] ** 2
        return out


def project_omega(geom, projector: HierProjector, phys):
    """Mapped projector for a physical function ``phys`` (callable or ``evaluate`` object)."""
    n = projector.space.level
    if n < max(projector.n0, geom.coarse_level):
        raise LevelError(f"level {n} is below max(n0, n*) = {max(projector.n0, geom.coarse_level)}")
    geom.require_valid()
    smp = geom.sample(projector.node_u, projector.node_v, 0)
    psi = _as_values(phys, smp.x, smp.y) * smp.weight[0]
    return MappedProjection(geom, projector, projector.coefficients_from_values(psi))


# ----------------------------------------------------------------------
# local stability


def element_stability_ratios(quad, ext, phi_vals, proj_vals, guard=1e-300):
    """``||Pi phi||_{L2(elem)} / ||phi||_{L2(ext(elem))}`` for every element.

    ``phi_vals`` and ``proj_vals`` are nodal values at the quadrature nodes,
    shape ``(N,)`` or ``(K, N)``; ``ext`` is the support-extension matrix.
    """
    num = quad.element_sums(np.asarray(proj_vals) ** 2)
    den_el = quad.element_sums(np.asarray(phi_vals) ** 2)
    den = (ext @ den_el.T).T
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den < guard, 0.0, np.sqrt(num / np.where(den < guard, 1.0, den)))
    return ratio


def stability_ratio(projector: HierProjector, f, element, quad_order=None):
    """``||Pi f||_{L2(element)} / ||f||_{L2(support extension)}``."""
    from .mesh import build_hier_mesh, support_extension
    from .quadrature import integrate_element

    space = projector.space
    mesh = build_hier_mesh(space.degree, space.level)
    q = quad_order or projector.quad_order
    pf = projector.project(f)
    num = integrate_element(element, lambda u, v: pf(u, v) ** 2, q)
    den = sum(integrate_element(e, lambda u, v: _as_values(f, u, v) ** 2, q)
              for e in support_extension(mesh, element, space))
    return 0.0 if den < 1e-300 else float(np.sqrt(num / den))
