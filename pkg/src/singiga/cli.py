"""Command-line front end.

Subcommands: ``mesh``, ``basis``, ``project``, ``study``, ``stability`` and
``geometry-check``.  Exit codes: 0 on success, 1 on invalid input, 2 on a
numerical failure such as an ill-conditioned Gram matrix.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import GeometryError, GramConditioningError, LevelError, SingularPointError
from .geometry import check_membership, parse_geometry
from .mesh import build_hier_mesh, classify_region
from .projector import HierProjector, coarse_level_n0, project_omega
from .space import HierSpace, eval_basis
from .study import (FUNCTION_NAMES, default_norm_order, get_test_function, run_convergence_study,
                    run_stability_scan)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_levels(text):
    """``"a:b"`` (inclusive) or a single integer."""
    try:
        if ":" in text:
            a, b = (int(x) for x in text.split(":"))
        else:
            a = b = int(text)
    except ValueError:
        raise UsageError(f"invalid level range {text!r}; expected 'a:b' or an integer") from None
    if a > b or a < 0:
        raise UsageError(f"invalid level range {text!r}")
    return list(range(a, b + 1))


def _pair(text, kind=float):
    try:
        a, b = (kind(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"expected two comma-separated values, got {text!r}") from None
    return a, b


def build_parser():
    ap = _Parser(prog="singiga", description="Hierarchical splines on singularly parameterized triangles.")
    ap.add_argument("--version", action="version", version=f"singiga {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, levels=False):
        p.add_argument("--degree", "-p", type=int, required=True, help="spline degree p >= 1")
        if levels:
            p.add_argument("--levels", required=True, help="level range 'a:b' (inclusive)")
        else:
            p.add_argument("--level", "-n", type=int, default=None, help="refinement level (default n0(p))")
        p.add_argument("--out", "-o", default=None, help="output file (default stdout)")

    m = sub.add_parser("mesh", help="dump the hierarchical mesh as JSON")
    common(m)
    m.add_argument("--classify", action="store_true", help="add the region class of every element")

    b = sub.add_parser("basis", help="list basis functions or evaluate them at a point")
    common(b)
    b.add_argument("--point", default=None, help="evaluation point 'u,v'")
    b.add_argument("--deriv", default="0,0", help="derivative multi-index 'a,b' (default 0,0)")

    pr = sub.add_parser("project", help="coefficients of the quasi-interpolant of a test function")
    common(pr)
    pr.add_argument("--function", "-f", required=True, help=f"one of {', '.join(FUNCTION_NAMES)}")
    pr.add_argument("--geometry", default=None, help="'identity', 'curved[:a[:b]]' or a geometry JSON file")
    pr.add_argument("--projector-order", type=int, default=None, help="Gauss points of the dual functionals")
    pr.add_argument("--paper-literal-mk", action="store_true",
                    help="use ceil(log2(k-p+1)) as the t-level of tensor duals")

    st = sub.add_parser("study", help="convergence study with fitted rates")
    common(st, levels=True)
    st.add_argument("--function", "-f", required=True, help=f"one of {', '.join(FUNCTION_NAMES)}")
    st.add_argument("--geometry", default=None, help="'identity', 'curved[:a[:b]]' or a geometry JSON file")
    st.add_argument("--format", choices=("csv", "json"), default="csv")
    st.add_argument("--quad-order", type=int, default=None, help="Gauss points per direction for norms")
    st.add_argument("--projector-order", type=int, default=None, help="Gauss points of the dual functionals")
    st.add_argument("--quadrature-check", action="store_true", help="also report the change under q+2")
    st.add_argument("--paper-literal-mk", action="store_true",
                    help="use ceil(log2(k-p+1)) as the t-level of tensor duals")

    sb = sub.add_parser("stability", help="element-wise L2 stability scan")
    common(sb, levels=True)
    sb.add_argument("--samples", type=int, default=50, help="number of random functions")
    sb.add_argument("--seed", type=int, default=42)
    sb.add_argument("--format", choices=("csv", "json"), default="json")
    sb.add_argument("--quad-order", type=int, default=None, help="Gauss points per direction for norms")
    sb.add_argument("--quadrature-check", action="store_true", help="also report the change under q+2")

    g = sub.add_parser("geometry-check", help="validate a geometry (membership, F0 > 0, det > 0)")
    g.add_argument("--geometry", required=True, help="'identity', 'curved[:a[:b]]' or a geometry JSON file")
    g.add_argument("--level", type=int, default=None, help="sampling level (default coarse level + 3)")
    g.add_argument("--out", "-o", default=None)
    return ap


def _level(args):
    n0 = coarse_level_n0(args.degree)
    return n0 if args.level is None else args.level


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "out"}
    cfg["version"] = __version__
    return cfg


def _validate(args):
    if getattr(args, "degree", 1) < 1:
        raise UsageError(f"degree must be >= 1, got {args.degree}")
    if getattr(args, "level", None) is not None and args.level < 0:
        raise UsageError(f"level must be >= 0, got {args.level}")
    if getattr(args, "function", None) is not None:
        get_test_function(args.function, args.degree)
    for name in ("quad_order", "projector_order"):
        val = getattr(args, name, None)
        if val is not None and val < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")
    if getattr(args, "samples", 1) < 1:
        raise UsageError("--samples must be >= 1")


def cmd_mesh(args):
    n = _level(args)
    mesh = build_hier_mesh(args.degree, n)
    n0 = coarse_level_n0(args.degree)
    elems = []
    for e in mesh:
        d = e.to_dict(n)
        if args.classify:
            d["region"], d["witness"] = classify_region(e, n, n0)
        elems.append(d)
    return {"config": _config(args), "level": n, "count": len(mesh), "elements": elems}


def cmd_basis(args):
    n = _level(args)
    space = HierSpace(args.degree, n)
    out = {"config": _config(args), "level": n, "dimension": space.dimension}
    if args.point is None:
        out["basis"] = [{"i": fn.i, "j": fn.j, "block": "singular" if fn.singular else fn.block}
                        for fn in space.basis]
        return out
    u, v = _pair(args.point)
    alpha = _pair(args.deriv, int)
    if min(alpha) < 0 or sum(alpha) > 2:
        raise UsageError("derivative multi-index must satisfy |alpha| <= 2")
    vals = space.collocation(np.array([u]), np.array([v]), sum(alpha))
    from .space import component_index
    row = vals[component_index(alpha)].toarray().ravel()
    out["values"] = [{"i": fn.i, "j": fn.j, "value": float(row[k])}
                     for k, fn in enumerate(space.basis) if row[k] != 0.0]
    return out


def cmd_project(args):
    n = _level(args)
    func = get_test_function(args.function, args.degree)
    projector = HierProjector(HierSpace(args.degree, n), args.projector_order, args.paper_literal_mk)
    geom = parse_geometry(args.geometry)
    if geom is None:
        coeffs = projector.coefficients(func)
    else:
        coeffs = project_omega(geom, projector, func).coeffs
    return {"config": _config(args), "level": n, "dimension": projector.space.dimension,
            "coefficients": [float(c) for c in coeffs]}


def cmd_study(args):
    levels = parse_levels(args.levels)
    if len(levels) < 2:
        raise UsageError("a study needs at least two levels")
    n0 = coarse_level_n0(args.degree)
    if levels[0] < n0:
        raise LevelError(f"levels must be >= n0 = {n0} for degree {args.degree}")
    table = run_convergence_study(
        args.degree, levels, args.function, geometry=parse_geometry(args.geometry),
        quad_order=args.quad_order, projector_order=args.projector_order,
        paper_literal_mk=args.paper_literal_mk, quadrature_check=args.quadrature_check)
    table.metadata["geometry"] = args.geometry or "none"
    if args.format == "csv":
        return table.to_csv()
    d = table.to_dict()
    d["config"] = _config(args)
    return d


def cmd_stability(args):
    levels = parse_levels(args.levels)
    rep = run_stability_scan(args.degree, levels, args.samples, args.seed, quad_order=args.quad_order,
                             quadrature_check=args.quadrature_check)
    if args.format == "csv":
        return rep.to_csv()
    d = rep.to_dict()
    d["config"] = _config(args)
    return d


def cmd_geometry_check(args):
    geom = parse_geometry(args.geometry)
    rep = geom.check(level=args.level)
    out = {"config": _config(args), "degree": geom.degree, "coarse_level": geom.coarse_level,
           "valid": rep.valid, "min_weight": rep.min_weight, "min_det": rep.min_det,
           "n_samples": rep.n_samples}
    out["membership"] = check_membership(geom)
    return out


COMMANDS = {"mesh": cmd_mesh, "basis": cmd_basis, "project": cmd_project, "study": cmd_study,
            "stability": cmd_stability, "geometry-check": cmd_geometry_check}


def _emit(result, path):
    text = result if isinstance(result, str) else json.dumps(result, indent=1) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        result = COMMANDS[args.command](args)
        _emit(result, args.out)
    except (GramConditioningError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"singiga: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, LevelError, GeometryError, SingularPointError, ValueError, OSError) as e:
        print(f"singiga: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "geometry-check" and not result["valid"]:
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
