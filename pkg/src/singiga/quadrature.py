"""Element quadrature on the hierarchical mesh and Sobolev (semi)norms.

Every element is the image of a parameter rectangle under ``u(s, t) = (s, s t)``,
so ``int_elem f du dv = int int f(s, s t) s ds dt``.  For the apex triangle
(``s0 = 0``) this pullback is the Duffy transform of the triangle onto a
square, which collapses one edge onto the singular vertex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spline_core import gauss_legendre


@dataclass(frozen=True)
class QuadRule:
    """Tensor Gauss-Legendre rule of ``order`` points per direction on [0,1]^2."""

    order: int

    @property
    def nodes(self):
        x, w = gauss_legendre(self.order)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        return X.ravel(), Y.ravel(), W.ravel()


class ElementQuadrature:
    """Quadrature nodes for all elements of a mesh, stored element-major.

    Attributes ``u``, ``v``, ``w`` are flat arrays of length ``E * q^2``; the
    weights include the pullback Jacobian ``s``.
    """

    def __init__(self, mesh, order):
        self.mesh = mesh
        self.order = order
        X, Y, W = QuadRule(order).nodes
        r = mesh.float_rects
        s0, s1, t0, t1 = (r[:, k][:, None] for k in range(4))
        S = s0 + (s1 - s0) * X[None, :]
        T = t0 + (t1 - t0) * Y[None, :]
        self.npe = len(W)
        self.s = S.ravel()
        self.t = T.ravel()
        self.u = self.s
        self.v = (S * T).ravel()
        self.w = ((s1 - s0) * (t1 - t0) * W[None, :] * S).ravel()

    @property
    def n_elements(self):
        return len(self.mesh)

    def element_sums(self, values):
        """Integrate nodal values element-wise; ``values`` has shape ``(..., N)``."""
        vals = np.asarray(values) * self.w
        shape = vals.shape[:-1] + (self.n_elements, self.npe)
        return vals.reshape(shape).sum(axis=-1)

    def element_slice(self, e):
        return slice(e * self.npe, (e + 1) * self.npe)


def integrate_element(element, f, order=4):
    """Integral of ``f(u, v)`` over one element."""
    X, Y, W = QuadRule(order).nodes
    s0, s1, t0, t1 = (float(c) for c in element.param_rect)
    S = s0 + (s1 - s0) * X
    T = t0 + (t1 - t0) * Y
    return float(np.sum((s1 - s0) * (t1 - t0) * W * S * f(S, S * T)))


def _seminorm_integrand(derivs, q):
    """Sum of squares of the order-q derivative components."""
    comps = {0: [0], 1: [1, 2], 2: [3, 4, 5]}[q]
    if derivs.shape[0] <= max(comps):
        raise ValueError(f"derivative order {q} not provided by the function handle")
    return sum(derivs[c] ** 2 for c in comps)


def sobolev_seminorm_squared(quad: ElementQuadrature, derivs, q):
    """Per-element ``|f|^2_{H^q}`` from nodal derivative components ``(ncomp, N)``."""
    if q > 2:
        raise ValueError("seminorms of order > 2 are not supported")
    return quad.element_sums(_seminorm_integrand(derivs, q))


def sobolev_norm_squared(quad: ElementQuadrature, derivs, k):
    return sum(sobolev_seminorm_squared(quad, derivs, q) for q in range(k + 1))


@dataclass(frozen=True)
class SobolevValue:
    element: int
    q: int
    value: float


def sobolev_seminorm(quad: ElementQuadrature, f, q):
    """Per-element seminorms and the global value.

    ``f`` is either an array of nodal derivative components or an object with
    ``evaluate(u, v, order)``.  Returns ``(list[SobolevValue], global_value)``.
    """
    derivs = f if isinstance(f, np.ndarray) else f.evaluate(quad.u, quad.v, q)
    sq = sobolev_seminorm_squared(quad, derivs, q)
    vals = [SobolevValue(e, q, float(np.sqrt(x))) for e, x in enumerate(sq)]
    return vals, float(np.sqrt(sq.sum()))


def omega_seminorm_squared(quad: ElementQuadrature, smp, derivs, q):
    """Per-element ``|phi|^2_{H^q(F(elem))}`` for a function given by its pullback.

    ``derivs`` holds the pullback ``phi o F`` and its (u, v)-gradient; the
    physical gradient is ``J^{-T}`` times it and the measure picks up ``det J``.
    """
    if q == 0:
        integrand = derivs[0] ** 2
    elif q == 1:
        J = smp.jac
        det = smp.det
        # J^{-T} g = (1/det) [[J11, -J10], [-J01, J00]] g
        gx = (J[:, 1, 1] * derivs[1] - J[:, 1, 0] * derivs[2]) / det
        gy = (-J[:, 0, 1] * derivs[1] + J[:, 0, 0] * derivs[2]) / det
        integrand = gx**2 + gy**2
    else:
        raise ValueError("seminorms on the physical domain are supported for q <= 1")
    return quad.element_sums(integrand * smp.det)


def omega_norm_squared(quad: ElementQuadrature, smp, derivs, k):
    return sum(omega_seminorm_squared(quad, smp, derivs, q) for q in range(k + 1))


def omega_norm(geom, f, k, quad: ElementQuadrature):
    """``||phi||_{H^k(Omega)}`` for ``phi`` given through its pullback ``f`` on the triangle."""
    geom.require_valid()
    smp = geom.sample(quad.u, quad.v, 1)
    derivs = f if isinstance(f, np.ndarray) else f.evaluate(quad.u, quad.v, k)
    return float(np.sqrt(omega_norm_squared(quad, smp, derivs, k).sum()))
