"""Hierarchical Bezier mesh on the triangle.

The mesh at level ``n`` keeps the uniform level-``n`` elements in the right
half ``u >= 1/2`` and fills the left half with the level ``n-1`` mesh scaled by
one half.  Elements are stored by their parameter rectangles in exact dyadic
arithmetic; in parameter space the scaling halves the s-range and keeps the
t-range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

TRAPEZOID = "trapezoid"
APEX = "apex_triangle"

RIGHT_OF_3_8 = "right_of_3_8"
SCALABLE = "scalable"
SINGULAR_CORE = "singular_core"


@dataclass(frozen=True)
class HierElement:
    kind: str
    s0: Fraction
    s1: Fraction
    t0: Fraction
    t1: Fraction
    level_of_origin: int

    @property
    def param_rect(self):
        return self.s0, self.s1, self.t0, self.t1

    def halved(self):
        return HierElement(self.kind, self.s0 / 2, self.s1 / 2, self.t0, self.t1,
                           self.level_of_origin)

    @property
    def vertices(self):
        """Physical vertices (apex triangle: three, trapezoid: four)."""
        s0, s1, t0, t1 = self.param_rect
        if self.kind == APEX:
            return [(Fraction(0), Fraction(0)), (s1, s1 * t0), (s1, s1 * t1)]
        return [(s0, s0 * t0), (s1, s1 * t0), (s1, s1 * t1), (s0, s0 * t1)]

    @property
    def area(self) -> Fraction:
        # integral of s over the parameter rectangle
        return (self.s1**2 - self.s0**2) / 2 * (self.t1 - self.t0)

    @property
    def diameter(self) -> float:
        pts = [(float(a), float(b)) for a, b in self.vertices]
        return max(math.dist(p, q) for p in pts for q in pts)

    @property
    def inradius(self) -> float:
        """Radius of the largest disc inside the element.

        The element is the wedge ``t0 <= v/u <= t1`` cut by ``s0 <= u <= s1``;
        the best disc in the wedge with centre abscissa ``c`` has radius
        ``kappa * c`` with ``kappa = sin(alpha/2) / cos(theta_mid)``.
        """
        th0, th1 = math.atan(float(self.t0)), math.atan(float(self.t1))
        kappa = math.sin((th1 - th0) / 2) / math.cos((th0 + th1) / 2)
        s0, s1 = float(self.s0), float(self.s1)
        return min(kappa * s1 / (1 + kappa), (s1 - s0) / 2)

    def contains_point(self, u, v):
        s0, s1, t0, t1 = (float(c) for c in self.param_rect)
        if u < s0 or u > s1:
            return False
        if u == 0:
            return self.kind == APEX
        t = v / u
        return t0 <= t <= t1

    def to_dict(self, level):
        """JSON form with exact dyadic numerators over ``2**level``."""
        den = 2**level
        return {
            "kind": self.kind,
            "level": level,
            "param_rect": [int(c * den) for c in self.param_rect],
            "level_of_origin": self.level_of_origin,
            "vertices": [[float(a), float(b)] for a, b in self.vertices],
        }


class HierMesh:
    def __init__(self, degree, level, elements):
        self.degree = degree
        self.level = level
        self.elements = tuple(elements)
        self._lookup = {e.param_rect: k for k, e in enumerate(self.elements)}

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def index(self, element):
        try:
            return self._lookup[element.param_rect]
        except KeyError:
            raise KeyError(f"element {element.param_rect} is not in the level-{self.level} mesh") from None

    @staticmethod
    def count_formula(n):
        return 1 + sum(2**(2 * k - 1) for k in range(1, n + 1))

    @cached_property
    def integer_rects(self):
        """``(E, 4)`` int array: s in units of 2^-n, t in units of 2^-n."""
        den = 2**self.level
        return np.array([[int(c * den) for c in e.param_rect] for e in self.elements], dtype=np.int64)

    @cached_property
    def float_rects(self):
        return self.integer_rects / float(2**self.level)

    @cached_property
    def areas(self):
        r = self.float_rects
        return 0.5 * (r[:, 1] ** 2 - r[:, 0] ** 2) * (r[:, 3] - r[:, 2])

    def apex(self):
        return next(e for e in self.elements if e.kind == APEX)

    def left_half(self):
        return [e for e in self.elements if e.s1 <= Fraction(1, 2)]


@lru_cache(maxsize=None)
def _build_elements(n):
    if n == 0:
        return (HierElement(APEX, Fraction(0), Fraction(1), Fraction(0), Fraction(1), 0),)
    N = 2**n
    right = [
        HierElement(TRAPEZOID, Fraction(a, N), Fraction(a + 1, N), Fraction(b, N), Fraction(b + 1, N), n)
        for a in range(N // 2, N) for b in range(N)
    ]
    left = [e.halved() for e in _build_elements(n - 1)]
    return tuple(sorted(left + right, key=lambda e: (e.s0, e.t0)))


def build_hier_mesh(p, n) -> HierMesh:
    if n < 0:
        raise ValueError(f"level must be >= 0, got {n}")
    return HierMesh(p, n, _build_elements(n))


def classify_region(element: HierElement, n, n0):
    """Three-way classification used in the stability argument.

    Returns ``(class, m)``, where ``m`` is the scaling witness for the
    ``scalable`` class and ``None`` otherwise.
    """
    lo, hi = Fraction(3, 8), Fraction(3, 4)
    if element.s0 >= lo:
        return RIGHT_OF_3_8, None
    if element.s1 <= lo:
        for m in range(1, n - n0 + 1):
            if 2**m * element.s0 >= lo and 2**m * element.s1 <= hi:
                return SCALABLE, m
    return SINGULAR_CORE, None


# ----------------------------------------------------------------------
# incidence between elements and basis functions


def _function_rects(space, level):
    """Integer support rectangles of all basis functions (same units as the mesh)."""
    p = space.degree
    N = 2**level
    out = np.empty((space.dimension, 4), dtype=np.int64)
    for k, fn in enumerate(space.basis):
        out[k, 0] = max(0, fn.i - p - 1)
        out[k, 1] = min(N, fn.i)
        if fn.singular:
            out[k, 2:] = (0, N)
        else:
            m = fn.block
            scale = 2**(level - m)
            out[k, 2] = max(0, fn.j - p - 1) * scale
            out[k, 3] = min(2**m, fn.j) * scale
    return out


def incidence(mesh: HierMesh, space):
    """Sparse boolean ``(elements, functions)``: positive-area support overlap."""
    if space.level != mesh.level or space.degree != mesh.degree:
        raise ValueError("mesh and space must share degree and level")
    E = mesh.integer_rects
    p = space.degree
    n = mesh.level
    rows, cols = [], []
    for e in range(len(E)):
        s0, s1, t0, t1 = (int(x) for x in E[e])
        # every element lies in one s-span; b_i overlaps it for s0 < i <= s1 + p
        for i in range(s0 + 1, s1 + p + 1):
            m = space.block_of(i)
            if m == 0:
                ks = range(space.index(i, 1), space.index(i, i) + 1)
            else:
                # element t-range lies inside a single level-m span
                span = t0 // 2**(n - m)
                ks = range(space.index(i, span + 1), space.index(i, span + p + 1) + 1)
            rows.extend([e] * len(ks))
            cols.extend(ks)
    data = np.ones(len(rows), dtype=bool)
    return sp.csr_matrix((data, (rows, cols)), shape=(len(E), space.dimension))


def support_extension_matrix(mesh: HierMesh, space):
    """Sparse boolean ``(E, E)``: element b belongs to the support extension of element a."""
    A = incidence(mesh, space).astype(np.int32)
    return ((A @ A.T) > 0).tocsr()


def support_extension(mesh: HierMesh, element: HierElement, space):
    """Set of mesh elements forming the support extension of ``element``."""
    e = mesh.index(element)
    A = incidence(mesh, space)
    funcs = A[e].indices
    elems = np.unique(A[:, funcs].tocoo().row)
    return [mesh.elements[k] for k in elems]
