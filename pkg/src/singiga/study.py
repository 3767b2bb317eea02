"""Convergence studies, stability scans, rate fitting and report output.

Convergence studies project a smooth test function at a range of levels and
record global L2 and H1-seminorm errors, either on the reference triangle or
on a physical patch given by a rational geometry.  Stability scans compare
``||Pi phi||_{L2(elem)}`` with ``||phi||_{L2(support extension)}`` on every
element for a batch of seeded random smooth functions.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from . import __version__
from .geometry import pullback_physical
from .mesh import (RIGHT_OF_3_8, SCALABLE, SINGULAR_CORE, build_hier_mesh, classify_region,
                   support_extension_matrix)
from .projector import HierProjector, coarse_level_n0, element_stability_ratios, project_omega
from .quadrature import (ElementQuadrature, omega_seminorm_squared, sobolev_seminorm_squared)
from .space import HierFunction, HierSpace, element_sample_points

REPRODUCED = "reproduced"
EXACT_TOL = 1e-13


def default_norm_order(p):
    """Gauss points per direction used for error and stability norms.

    Chosen so that two extra points change every reported norm by less than
    1e-8 relative (see ``quadrature_check`` of the study drivers).
    """
    return max(p + 5, 7)


# ----------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Smooth function of two variables with partial derivatives up to order 2.

    ``evaluate(x, y, order)`` returns an array ``(ncomp, N)`` ordered as
    ``f, f_x, f_y, f_xx, f_xy, f_yy`` (truncated to ``order``).
    """

    name: str
    fn: object
    smoothness: str = "C-infinity"

    __test__ = False  # not a pytest class

    def evaluate(self, x, y, order=0):
        if order > 2:
            raise ValueError("test functions provide derivatives up to order 2")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack(self.fn(x, y, order))

    def __call__(self, x, y):
        return self.evaluate(x, y, 0)[0]


def _one(x, y, order):
    z = np.zeros_like(x)
    return [np.ones_like(x)] + [z] * (len(_ORDERS[order]) - 1)


def _trig(x, y, order):
    a, b = np.pi * x, np.pi * y
    sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
    out = [sa * sb]
    if order >= 1:
        out += [np.pi * ca * sb, np.pi * sa * cb]
    if order >= 2:
        pi2 = np.pi**2
        out += [-pi2 * sa * sb, pi2 * ca * cb, -pi2 * sa * sb]
    return out


def _expf(x, y, order):
    e = np.exp(x + y)
    return [e] * len(_ORDERS[order])


def _poly(p):
    """``x^p + x^(p-1) y``, a degree-p polynomial touching both variables."""

    def mono(x, y, a, b, dx, dy):
        if dx > a or dy > b:
            return np.zeros_like(x)
        ca = math.perm(a, dx)
        cb = math.perm(b, dy)
        return ca * cb * x ** (a - dx) * y ** (b - dy)

    def fn(x, y, order):
        return [mono(x, y, p, 0, dx, dy) + mono(x, y, p - 1, 1, dx, dy) for dx, dy in _ORDERS[order]]

    return fn


_ORDERS = {0: [(0, 0)], 1: [(0, 0), (1, 0), (0, 1)],
           2: [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}

FUNCTION_NAMES = ("one", "poly_p", "trig", "expf")


def get_test_function(name, p=None) -> TestFunction:
    """Look up a registry function; ``poly_p`` (or ``poly_<k>``) needs a degree."""
    if name == "one":
        return TestFunction("one", _one)
    if name == "trig":
        return TestFunction("trig", _trig)
    if name == "expf":
        return TestFunction("expf", _expf)
    if name.startswith("poly_"):
        suffix = name[5:]
        deg = p if suffix == "p" else int(suffix) if suffix.isdigit() else None
        if deg is None or deg < 1:
            raise ValueError(f"cannot determine the degree of test function {name!r}")
        return TestFunction(f"poly_{deg}", _poly(deg), "polynomial")
    raise ValueError(f"unknown test function {name!r}; choose from {', '.join(FUNCTION_NAMES)}")


# ----------------------------------------------------------------------
# rates


@dataclass
class RateFit:
    slope: object  # float, or REPRODUCED
    ratios: list  # log2(e_k / e_{k+1}); None where not defined


def fit_rate(errors, hs):
    """Least-squares slope of ``log e`` against ``log h`` plus pairwise log2 ratios.

    If any error is at or below ``1e-13`` the data reflect exact reproduction
    and the slope is the sentinel ``"reproduced"``.
    """
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("fit_rate needs at least two (error, h) pairs")
    ratios = []
    for a, b, ha, hb in zip(errors, errors[1:], hs, hs[1:]):
        if a > EXACT_TOL and b > EXACT_TOL:
            ratios.append(float(np.log(a / b) / np.log(ha / hb)))
        else:
            ratios.append(None)
    if np.any(errors <= EXACT_TOL):
        return RateFit(REPRODUCED, ratios)
    slope = np.polyfit(np.log(hs), np.log(errors), 1)[0]
    return RateFit(float(slope), ratios)


# ----------------------------------------------------------------------
# error tables


@dataclass
class ErrorRow:
    level: int
    h: float
    err_L2: float
    err_H1: float
    ratio_L2: float | None = None
    ratio_H1: float | None = None


@dataclass
class ErrorTable:
    rows: list
    slope_L2: object = None
    slope_H1: object = None
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("level", "h", "err_L2", "err_H1", "ratio_L2", "ratio_H1")

    def refit(self, nfit=3):
        """Recompute successive ratios and slopes over the finest ``nfit`` levels."""
        hs = [r.h for r in self.rows]
        for name in ("L2", "H1"):
            errs = [getattr(r, f"err_{name}") for r in self.rows]
            if len(errs) < 2:
                continue
            fit_all = fit_rate(errs, hs)
            self.rows[0].__setattr__(f"ratio_{name}", None)
            for r, ratio in zip(self.rows[1:], fit_all.ratios):
                setattr(r, f"ratio_{name}", ratio)
            k = min(nfit, len(errs))
            setattr(self, f"slope_{name}", fit_rate(errs[-k:], hs[-k:]).slope)
        return self

    def to_csv(self):
        buf = io.StringIO()
        buf.write("".join(f"# {k}: {_fmt(v)}\n" for k, v in self.metadata.items()))
        buf.write(f"# slope_L2: {_fmt(self.slope_L2)}\n# slope_H1: {_fmt(self.slope_H1)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in self.COLUMNS])
        return buf.getvalue()

    def to_dict(self):
        return {
            "metadata": self.metadata,
            "columns": list(self.COLUMNS),
            "rows": [{c: getattr(r, c) for c in self.COLUMNS} for r in self.rows],
            "slope_L2": self.slope_L2,
            "slope_H1": self.slope_H1,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


# ----------------------------------------------------------------------
# convergence studies


def _delta_errors(projector, func, quad):
    """Squared L2 and H1-seminorm errors of ``func - Pi func`` on the triangle."""
    space = projector.space
    coeffs = projector.coefficients(func)
    approx = HierFunction(space, coeffs).evaluate(quad.u, quad.v, 1)
    err = func.evaluate(quad.u, quad.v, 1) - approx
    return (float(sobolev_seminorm_squared(quad, err, 0).sum()),
            float(sobolev_seminorm_squared(quad, err, 1).sum()))


def _omega_errors(projector, func, geom, quad):
    """Squared L2 and H1-seminorm errors of ``func - Pi_V func`` on the physical patch."""
    proj = project_omega(geom, projector, func)
    smp = geom.sample(quad.u, quad.v, 1)
    err = pullback_physical(smp, func, 1) - proj.evaluate(quad.u, quad.v, 1, smp=smp)
    return (float(omega_seminorm_squared(quad, smp, err, 0).sum()),
            float(omega_seminorm_squared(quad, smp, err, 1).sum()))


def run_convergence_study(p, levels, func, geometry=None, quad_order=None,
                          projector_order=None, paper_literal_mk=False, quadrature_check=False,
                          nfit=3):
    """Project ``func`` at every level and tabulate L2 and H1-seminorm errors.

    ``func`` is a :class:`TestFunction` or a registry name.  Without a
    geometry the errors are measured on the reference triangle; with one they
    are measured on the physical patch through the mapped projector.  With
    ``quadrature_check`` every norm is recomputed with two more Gauss points
    per direction and the largest relative change is stored in the metadata.
    """
    if isinstance(func, str):
        func = get_test_function(func, p)
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least two levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    n0 = coarse_level_n0(p)
    q = quad_order or default_norm_order(p)
    rows = []
    qcheck = 0.0
    for n in levels:
        projector = HierProjector(HierSpace(p, n), projector_order, paper_literal_mk)
        mesh = build_hier_mesh(p, n)

        def errors(order):
            quad = ElementQuadrature(mesh, order)
            if geometry is None:
                return _delta_errors(projector, func, quad)
            return _omega_errors(projector, func, geometry, quad)

        e0, e1 = errors(q)
        if quadrature_check:
            f0, f1 = errors(q + 2)
            for a, b in ((e0, f0), (e1, f1)):
                if a > 0:
                    qcheck = max(qcheck, abs(math.sqrt(b / a) - 1.0))
        rows.append(ErrorRow(n, 2.0**-n, math.sqrt(e0), math.sqrt(e1)))
    meta = {
        "study": "omega" if geometry is not None else "delta",
        "degree": p,
        "n0": n0,
        "function": func.name,
        "levels": f"{levels[0]}:{levels[-1]}",
        "quad_order": q,
        "projector_quad_order": projector_order or p + 3,
        "paper_literal_mk": paper_literal_mk,
        "version": __version__,
    }
    if geometry is not None:
        meta["geometry_degree"] = geometry.degree
        meta["geometry_level"] = geometry.coarse_level
    if quadrature_check:
        meta["quadrature_rel_change"] = qcheck
    return ErrorTable(rows, metadata=meta).refit(nfit)


# ----------------------------------------------------------------------
# stability scans


class RandomSmoothFunctions:
    """Seeded batch of smooth random functions of ``(x, y)`` on the unit square.

    Each sample is a tensor product of a quintic spline in ``x`` (uniform
    breakpoints at multiples of 1/4) and a quintic polynomial in ``y`` with
    standard normal coefficients, plus a few trigonometric modes with random
    amplitudes, frequencies and phases.  The breakpoints ``x = k/4`` are
    element boundaries of every mesh from level 2 on, so element quadrature
    never straddles a break in smoothness.  Samples are drawn from
    ``numpy.random.default_rng(seed)`` (PCG64), so a seed fixes the batch.
    """

    DEGREE = 5
    INTERVALS = 4
    MODES = 3

    def __init__(self, n_samples, seed):
        rng = np.random.default_rng(seed)
        k, m = self.DEGREE, self.INTERVALS
        self.knots = np.concatenate([np.zeros(k), np.linspace(0.0, 1.0, m + 1), np.ones(k)])
        self.poly_knots = np.concatenate([np.zeros(k + 1), np.ones(k + 1)])
        self.n_samples = n_samples
        self.coeffs = rng.standard_normal((n_samples, m + k, k + 1))
        self.amp = rng.standard_normal((n_samples, self.MODES))
        self.freq = rng.uniform(0.5, 4.0, size=(n_samples, self.MODES, 2))
        self.phase = rng.uniform(0.0, 2 * np.pi, size=(n_samples, self.MODES))

    def subset(self, start, stop):
        """The samples ``start:stop`` as a new batch."""
        out = object.__new__(type(self))
        out.knots, out.poly_knots = self.knots, self.poly_knots
        out.n_samples = stop - start
        for name in ("coeffs", "amp", "freq", "phase"):
            setattr(out, name, getattr(self, name)[start:stop])
        return out

    def _design(self, x, knots):
        return BSpline.design_matrix(np.clip(x, 0.0, 1.0), knots, self.DEGREE).toarray()

    def values(self, x, y):
        """Array ``(n_samples, N)`` of all samples at the points."""
        Bx, By = self._design(x, self.knots), self._design(y, self.poly_knots)
        out = np.einsum("na,sab,nb->sn", Bx, self.coeffs, By)
        for r in range(self.MODES):
            arg = np.pi * (np.outer(self.freq[:, r, 0], x) + np.outer(self.freq[:, r, 1], y))
            out += self.amp[:, r, None] * np.sin(arg + self.phase[:, r, None])
        return out


@dataclass
class LevelStability:
    level: int
    max_ratio: float
    mean_ratio: float
    control_max: float
    by_class: dict  # class -> {"count", "max", "mean"}


@dataclass
class StabilityReport:
    degree: int
    n0: int
    seed: int
    n_samples: int
    quad_order: int
    levels: list
    scaled_identity: dict  # region class -> max deviation over levels
    quadrature_rel_change: float | None = None

    @property
    def c_s_estimate(self):
        return max(lv.max_ratio for lv in self.levels)

    def level(self, n):
        return next(lv for lv in self.levels if lv.level == n)

    def to_dict(self):
        return {
            "metadata": {"degree": self.degree, "n0": self.n0, "seed": self.seed,
                         "n_samples": self.n_samples, "quad_order": self.quad_order,
                         "version": __version__},
            "levels": [lv.__dict__ for lv in self.levels],
            "c_s_estimate": self.c_s_estimate,
            "scaled_identity": self.scaled_identity,
            "quadrature_rel_change": self.quadrature_rel_change,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        for k, v in self.to_dict()["metadata"].items():
            buf.write(f"# {k}: {v}\n")
        buf.write(f"# c_s_estimate: {self.c_s_estimate!r}\n")
        for k, v in self.scaled_identity.items():
            buf.write(f"# scaled_identity_{k}: {v!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        classes = (RIGHT_OF_3_8, SCALABLE, SINGULAR_CORE)
        w.writerow(["level", "max_ratio", "mean_ratio", "control_max"] + [f"max_{c}" for c in classes])
        for lv in self.levels:
            w.writerow([lv.level, repr(lv.max_ratio), repr(lv.mean_ratio), repr(lv.control_max)]
                       + [repr(lv.by_class[c]["max"]) if c in lv.by_class else "" for c in classes])
        return buf.getvalue()


def _level_ratios(projector, samples, quad_order, chunk=10):
    """Element ratios ``(n_samples + 1, E)``; the last row is the control ``phi = 1``."""
    space = projector.space
    mesh = build_hier_mesh(space.degree, space.level)
    quad = ElementQuadrature(mesh, quad_order)
    ext = support_extension_matrix(mesh, space).astype(float)
    B = space.collocation(quad.u, quad.v)[0]
    node_ones = np.ones((1, len(projector.node_u)))
    quad_ones = np.ones((1, len(quad.u)))
    out = []
    for start in range(0, samples.n_samples + 1, chunk):
        stop = min(start + chunk, samples.n_samples + 1)
        sub = samples.subset(start, min(stop, samples.n_samples))
        node_vals = sub.values(projector.node_u, projector.node_v)
        phi_vals = sub.values(quad.u, quad.v)
        if stop == samples.n_samples + 1:
            node_vals = np.vstack([node_vals, node_ones])
            phi_vals = np.vstack([phi_vals, quad_ones])
        proj_vals = (B @ projector.coefficients_from_values(node_vals.T)).T
        out.append(element_stability_ratios(quad, ext, phi_vals, proj_vals))
    return mesh, np.vstack(out)


def scaled_identity_errors(p, n, samples, npts=4, projector_order=None):
    """Largest deviations in the scaling identities behind the stability estimate.

    For a ``scalable`` element with witness ``m``, and for a ``singular_core``
    element with ``m = n - n0``, the level-``n`` projection must agree with the
    level ``n - m`` projection of ``phi(2^-m .)`` at the scaled points.
    Returns ``{class: max_abs_error}`` over the classes present at level ``n``.
    """
    n0 = coarse_level_n0(p)
    mesh = build_hier_mesh(p, n)
    fine = HierProjector(HierSpace(p, n), projector_order)
    groups = {}
    for e in mesh:
        cls, m = classify_region(e, n, n0)
        if cls == SINGULAR_CORE and n > n0:
            groups.setdefault((cls, n - n0), []).append(e)
        elif cls == SCALABLE:
            groups.setdefault((cls, m), []).append(e)
    cf = fine.coefficients_from_values(samples.values(fine.node_u, fine.node_v).T)
    worst = {}
    for (cls, m), elems in sorted(groups.items()):
        pts = [element_sample_points(e, npts) for e in elems]
        u = np.concatenate([a for a, _ in pts])
        v = np.concatenate([b for _, b in pts])
        coarse = HierProjector(HierSpace(p, n - m), projector_order)
        c = 2.0**-m
        cc = coarse.coefficients_from_values(samples.values(c * coarse.node_u, c * coarse.node_v).T)
        a = fine.space.collocation(u, v)[0] @ cf
        b = coarse.space.collocation(u / c, v / c)[0] @ cc
        worst[cls] = max(worst.get(cls, 0.0), float(np.max(np.abs(a - b))))
    return worst


def run_stability_scan(p, levels, n_samples=50, seed=42, quad_order=None, projector_order=None,
                       quadrature_check=False):
    """Element-wise L2 stability ratios over seeded random smooth functions.

    The constant function is included as a control.  Ratios are aggregated per
    level and per region class of :func:`classify_region`; the scaling
    identities of :func:`scaled_identity_errors` are checked at every level.
    """
    n0 = coarse_level_n0(p)
    levels = list(levels)
    if not levels or min(levels) < n0:
        raise ValueError(f"stability scans need levels >= n0 = {n0}")
    q = quad_order or default_norm_order(p)
    samples = RandomSmoothFunctions(n_samples, seed)
    out = []
    ident = {}
    qcheck = 0.0
    for n in levels:
        projector = HierProjector(HierSpace(p, n), projector_order)
        mesh, ratios = _level_ratios(projector, samples, q)
        if quadrature_check:
            _, ratios2 = _level_ratios(projector, samples, q + 2)
            mask = ratios > 0
            qcheck = max(qcheck, float(np.max(np.abs(ratios2[mask] / ratios[mask] - 1.0))))
        rnd = ratios[:-1]
        classes = np.array([classify_region(e, n, n0)[0] for e in mesh])
        by_class = {}
        for c in (RIGHT_OF_3_8, SCALABLE, SINGULAR_CORE):
            sel = classes == c
            if sel.any():
                by_class[c] = {"count": int(sel.sum()), "max": float(rnd[:, sel].max()),
                               "mean": float(rnd[:, sel].mean())}
        out.append(LevelStability(n, float(rnd.max()), float(rnd.mean()),
                                  float(ratios[-1].max()), by_class))
        for cls, err in scaled_identity_errors(p, n, samples, projector_order=projector_order).items():
            ident[cls] = max(ident.get(cls, 0.0), err)
    return StabilityReport(p, n0, seed, n_samples, q, out, ident,
                           qcheck if quadrature_check else None)
