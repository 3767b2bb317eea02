"""The singular map, triangle domains, and rational geometries ``F = (F1, F2) / F0``.

``F0, F1, F2`` are splines in a hierarchical space at a coarse level; the
physical patch is ``G = F o u`` where ``u(s, t) = (s, s t)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import GeometryError, SingularPointError
from .space import HierSpace, least_squares_fit, param_grid_points


def map_u(s, t):
    s = np.asarray(s, dtype=float)
    return s, s * np.asarray(t, dtype=float)


def inverse_u(u, v):
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise SingularPointError("inverse of the singular map is undefined at u <= 0")
    return u, np.asarray(v, dtype=float) / u


def jacobian_det_u(s, t=None):
    return s


@dataclass(frozen=True)
class TriangleDomain:
    """``{(u, v): 0 < u < gamma, 0 < v < u}``; gamma = 1 is the full triangle."""

    gamma: Fraction = Fraction(1)

    def contains(self, u, v):
        if isinstance(u, (int, Fraction)) and isinstance(v, (int, Fraction)):
            return 0 < u < self.gamma and 0 < v < u
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return (u > 0) & (u < float(self.gamma)) & (v > 0) & (v < u)

    @property
    def area(self):
        return Fraction(self.gamma) ** 2 / 2


@dataclass
class GeometrySample:
    """Geometry data at a set of points of the triangle."""

    x: np.ndarray
    y: np.ndarray
    jac: np.ndarray  # (N, 2, 2), jac[:, a, b] = dF_a / d(u, v)_b
    det: np.ndarray
    weight: np.ndarray  # F0 and its (u, v) gradient, shape (3, N)


class RationalGeometry:
    def __init__(self, degree, coarse_level, F0, F1, F2):
        self.degree = int(degree)
        self.coarse_level = int(coarse_level)
        self.space = HierSpace(self.degree, self.coarse_level)
        self.coeffs = [np.asarray(c, dtype=float) for c in (F0, F1, F2)]
        for c in self.coeffs:
            if c.shape != (self.space.dimension,):
                raise GeometryError(
                    f"geometry coefficients must have length {self.space.dimension}, got {c.shape}")

    def sample(self, u, v, order=1) -> GeometrySample:
        mats = self.space.collocation(u, v, order)
        w, a, b = ([M @ c for M in mats] for c in self.coeffs)
        if np.any(w[0] <= 0):
            raise GeometryError(f"weight F0 is not positive (min {w[0].min():.3e})")
        x, y = a[0] / w[0], b[0] / w[0]
        jac = np.empty((len(x), 2, 2))
        if order >= 1:
            for row, f in enumerate((a, b)):
                for col in (1, 2):
                    jac[:, row, col - 1] = (f[col] * w[0] - f[0] * w[col]) / w[0] ** 2
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        else:
            jac[:] = np.nan
            det = np.full(len(x), np.nan)
        return GeometrySample(x, y, jac, det, np.stack(w[:3]) if order >= 1 else np.stack([w[0]]))

    def evaluate(self, u, v):
        smp = self.sample(np.atleast_1d(u), np.atleast_1d(v), 0)
        return smp.x, smp.y

    def jacobian(self, u, v):
        return self.sample(np.atleast_1d(u), np.atleast_1d(v), 1).jac

    def check(self, level=None, npts=None):
        """Sampled positivity of F0 and det(grad F).

        Samples Gauss points of the uniform grid at ``level`` plus all grid
        corners; this is a sampling check, not a proof.
        """
        level = self.coarse_level + 3 if level is None else level
        npts = npts or self.degree + 3
        u, v = param_grid_points(level, npts)
        g = np.arange(2**level + 1) / 2**level
        S, T = np.meshgrid(g, g, indexing="ij")
        u = np.concatenate([u, S.ravel()])
        v = np.concatenate([v, (S * T).ravel()])
        mats = self.space.collocation(u, v, 1)
        w = [M @ self.coeffs[0] for M in mats]
        min_w = float(w[0].min())
        if min_w <= 0:
            return GeometryReport(False, min_w, float("nan"), len(u))
        smp = self.sample(u, v, 1)
        min_det = float(smp.det.min())
        return GeometryReport(min_det > 0, min_w, min_det, len(u))

    def require_valid(self, **kw):
        rep = self.check(**kw)
        if not rep.valid:
            raise GeometryError(
                f"geometry check failed: min F0 = {rep.min_weight:.3e}, min det = {rep.min_det:.3e}")
        return rep

    # -- serialization --------------------------------------------------
    def to_dict(self):
        return {
            "degree": self.degree,
            "coarse_level": self.coarse_level,
            "F0": self.coeffs[0].tolist(),
            "F1": self.coeffs[1].tolist(),
            "F2": self.coeffs[2].tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["degree"], d["coarse_level"], d["F0"], d["F1"], d["F2"])
        except KeyError as e:
            raise GeometryError(f"geometry file is missing key {e}") from None

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class GeometryReport:
    valid: bool
    min_weight: float
    min_det: float
    n_samples: int


def geometry_from_functions(degree, coarse_level, f1, f2, f0=None):
    """Fit closed-form components into the coarse hierarchical space.

    Raises :class:`GeometryError` if a component is not representable
    (least-squares residual above 1e-9).
    """
    space = HierSpace(degree, coarse_level)
    f0 = f0 or (lambda u, v: np.ones_like(u))
    coeffs = []
    for name, f in (("F0", f0), ("F1", f1), ("F2", f2)):
        c, res = least_squares_fit(space, f)
        if res > 1e-9:
            raise GeometryError(f"{name} is not representable at degree {degree} (residual {res:.2e})")
        coeffs.append(c)
    return RationalGeometry(degree, coarse_level, *coeffs)


def identity_geometry(degree=1, coarse_level=1):
    return geometry_from_functions(degree, coarse_level, lambda u, v: u, lambda u, v: v)


def curved_geometry(a=0.1, b=0.1, degree=2, coarse_level=1):
    """``F(u, v) = (u + a u v, v + b u v)``; needs degree >= 2 for the ``uv`` term."""
    if degree < 2:
        raise GeometryError("the curved family contains uv and needs degree >= 2")
    return geometry_from_functions(
        degree, coarse_level, lambda u, v: u + a * u * v, lambda u, v: v + b * u * v)


def parse_geometry(spec):
    """``identity``, ``curved[:a[:b]]`` or a path to a geometry JSON file."""
    if spec is None:
        return None
    if spec == "identity":
        return identity_geometry()
    if spec.startswith("curved"):
        parts = spec.split(":")[1:]
        vals = [float(x) for x in parts] + [0.1] * (2 - len(parts))
        return curved_geometry(vals[0], vals[1])
    return RationalGeometry.load(spec)


def eval_geometry(geom: RationalGeometry, point):
    x, y = geom.evaluate(*point)
    return float(x[0]), float(y[0])


def check_membership(geom_or_space, candidate=None, projector_order=None):
    """Membership report.

    Coefficient vectors define membership by construction; for a closed-form
    ``candidate(u, v)`` the quasi-interpolant (or, below the coarse level
    where it is defined, the least-squares fit) is compared with the
    candidate on a sample grid.
    """
    from .projector import HierProjector, coarse_level_n0

    space = geom_or_space.space if isinstance(geom_or_space, RationalGeometry) else geom_or_space
    report = {"degree": space.degree, "level": space.level, "dimension": space.dimension}
    if isinstance(geom_or_space, RationalGeometry):
        report["coefficients_ok"] = all(c.shape == (space.dimension,) for c in geom_or_space.coeffs)
    if candidate is None:
        return report
    u, v = param_grid_points(space.level, space.degree + 2)
    if space.level >= coarse_level_n0(space.degree):
        proj = HierProjector(space, quad_order=projector_order)
        coeffs = proj.coefficients(candidate)
        method = "quasi-interpolant"
    else:
        coeffs, _ = least_squares_fit(space, candidate)
        method = "least-squares"
    approx = space.collocation(u, v)[0] @ coeffs
    report["method"] = method
    report["residual"] = float(np.max(np.abs(approx - candidate(u, v))))
    return report


def pullback_physical(smp: GeometrySample, phys, order=1):
    """Values and (u, v)-gradient of ``phys o F`` from a physical function with derivatives."""
    vals = phys.evaluate(smp.x, smp.y, order)
    out = np.empty((1 if order == 0 else 3, len(smp.x)))
    out[0] = vals[0]
    if order >= 1:
        # grad_uv (phi o F) = J^T grad_xy phi
        out[1] = smp.jac[:, 0, 0] * vals[1] + smp.jac[:, 1, 0] * vals[2]
        out[2] = smp.jac[:, 0, 1] * vals[1] + smp.jac[:, 1, 1] * vals[2]
    if order > 1:
        raise NotImplementedError("pullbacks of order > 1 are not supported")
    return out


def probe_norm_equivalence(geom: RationalGeometry, k, functions, level=4, quad_order=None):
    """Ratios ``||phi||_{H^k(Omega)} / ||phi o F||_{H^k(Delta)}`` over sample functions.

    Returns ``(min_ratio, max_ratio)``; the reciprocal of the minimum and the
    maximum both bound the norm-equivalence constant from below.
    """
    from .mesh import build_hier_mesh
    from .quadrature import ElementQuadrature, omega_norm_squared, sobolev_norm_squared

    if k > 1:
        raise NotImplementedError("norm-equivalence probe supports k <= 1")
    geom.require_valid()
    quad = ElementQuadrature(build_hier_mesh(geom.degree, level), quad_order or geom.degree + 3)
    smp = geom.sample(quad.u, quad.v, 1)
    ratios = []
    for phys in functions:
        pulled = pullback_physical(smp, phys, k)
        om = omega_norm_squared(quad, smp, pulled, k).sum()
        de = sobolev_norm_squared(quad, pulled, k).sum()
        ratios.append(np.sqrt(om / de))
    return float(min(ratios)), float(max(ratios))
