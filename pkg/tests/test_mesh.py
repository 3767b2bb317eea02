from fractions import Fraction

import numpy as np
import pytest

from singiga.mesh import (APEX, RIGHT_OF_3_8, SCALABLE, SINGULAR_CORE, TRAPEZOID, HierElement,
                          HierMesh, build_hier_mesh, classify_region, incidence,
                          support_extension, support_extension_matrix)
from singiga.projector import coarse_level_n0
from singiga.space import HierSpace, active_functions

F = Fraction


@pytest.mark.parametrize("n,count", [(0, 1), (1, 3), (2, 11), (3, 43)])
def test_element_counts(n, count):
    assert len(build_hier_mesh(2, n)) == count


@pytest.mark.parametrize("n", range(9))
def test_count_closed_form_and_exact_area(n):
    mesh = build_hier_mesh(1, n)
    assert 3 * len(mesh) == 3 + 2 * (4**n - 1)
    assert HierMesh.count_formula(n) == len(mesh)
    assert sum(e.area for e in mesh) == F(1, 2)
    assert abs(mesh.areas.sum() - 0.5) < 1e-12


@pytest.mark.parametrize("n", range(1, 8))
def test_left_half_is_scaled_coarser_mesh(n):
    fine = build_hier_mesh(2, n)
    scaled = {(2 * e.s0, 2 * e.s1, e.t0, e.t1) for e in fine.left_half()}
    coarse = {e.param_rect for e in build_hier_mesh(2, n - 1)}
    assert scaled == coarse


def test_right_half_is_uniform():
    n = 3
    right = [e for e in build_hier_mesh(1, n) if e.s0 >= F(1, 2)]
    assert len(right) == 2**(2 * n - 1)
    assert all(e.s1 - e.s0 == F(1, 8) and e.t1 - e.t0 == F(1, 8) for e in right)
    assert all(e.level_of_origin == n and e.kind == TRAPEZOID for e in right)


def test_apex_element():
    apex = build_hier_mesh(2, 4).apex()
    assert apex.kind == APEX
    assert apex.param_rect == (0, F(1, 16), 0, 1)
    assert len(apex.vertices) == 3
    assert apex.area == F(1, 512)


def test_trapezoid_vertices():
    e = HierElement(TRAPEZOID, F(1, 2), F(3, 4), F(1, 4), F(1, 2), 2)
    assert e.vertices == [(F(1, 2), F(1, 8)), (F(3, 4), F(3, 16)), (F(3, 4), F(3, 8)), (F(1, 2), F(1, 4))]
    assert e.contains_point(0.6, 0.6 * 0.3)
    assert not e.contains_point(0.6, 0.6 * 0.6)


def test_shape_regularity_bounded_below():
    q = []
    for n in range(1, 9):
        mesh = build_hier_mesh(1, n)
        q.append(min(e.inradius / e.diameter for e in mesh))
    q = np.array(q)
    assert np.all(q > 0.09)
    assert np.all(np.diff(q) <= 1e-15)
    # decreases shrink geometrically: the minimum converges to a positive limit
    d = -np.diff(q)
    assert np.all(d[3:] < 0.6 * d[2:-1])


def test_inradius_of_unit_square_like_element():
    e = HierElement(TRAPEZOID, F(1, 2), F(1), F(0), F(1, 2), 1)
    # the wedge inradius never exceeds half the s-width
    assert e.inradius <= 0.25 + 1e-15
    assert e.inradius > 0


def test_mesh_index_and_json():
    mesh = build_hier_mesh(2, 2)
    e = mesh.elements[5]
    assert mesh.index(e) == 5
    with pytest.raises(KeyError):
        mesh.index(HierElement(TRAPEZOID, F(1, 3), F(1, 2), F(0), F(1), 0))
    d = e.to_dict(2)
    assert d["level"] == 2 and len(d["param_rect"]) == 4
    assert all(isinstance(c, int) for c in d["param_rect"])


def test_classify_examples():
    n0 = coarse_level_n0(2)
    n = n0 + 1
    right = HierElement(TRAPEZOID, F(1, 2), F(1), F(0), F(1, 32), n)
    assert classify_region(right, n, n0) == (RIGHT_OF_3_8, None)
    apex = build_hier_mesh(2, n).apex()
    assert classify_region(apex, n, n0)[0] == SINGULAR_CORE
    band = HierElement(TRAPEZOID, F(3, 16), F(3, 8), F(0), F(1, 2), n)
    assert classify_region(band, n, n0) == (SCALABLE, 1)


@pytest.mark.parametrize("p,extra", [(1, 0), (1, 3), (2, 2)])
def test_classification_is_total_with_valid_witness(p, extra):
    n0 = coarse_level_n0(p)
    n = n0 + extra
    for e in build_hier_mesh(p, n):
        cls, m = classify_region(e, n, n0)
        assert cls in (RIGHT_OF_3_8, SCALABLE, SINGULAR_CORE)
        if cls == SCALABLE:
            assert 1 <= m <= n - n0
            assert 2**m * e.s0 >= F(3, 8) and 2**m * e.s1 <= F(3, 4)
        else:
            assert m is None


def test_support_extension_level_zero():
    mesh = build_hier_mesh(2, 0)
    ext = support_extension(mesh, mesh.elements[0], HierSpace(2, 0))
    assert ext == list(mesh.elements)


@pytest.mark.parametrize("p,n", [(1, 4), (2, 3), (3, 5)])
def test_apex_extension_stays_near_vertex(p, n):
    mesh = build_hier_mesh(p, n)
    ext = support_extension(mesh, mesh.apex(), HierSpace(p, n))
    assert all(e.s1 <= F(p + 1, 2**n) for e in ext)


def test_rightmost_bottom_extension_width():
    p, n = 2, coarse_level_n0(2)
    mesh = build_hier_mesh(p, n)
    h = F(1, 2**n)
    corner = next(e for e in mesh if e.s1 == 1 and e.t0 == 0)
    ext = support_extension(mesh, corner, HierSpace(p, n))
    columns = {e.s0 for e in ext}
    assert len(columns) <= p + 1
    assert min(columns) == 1 - (p + 1) * h


@pytest.mark.parametrize("p", [1, 2])
def test_extension_right_of_3_8_avoids_coarse_apex(p):
    n0 = coarse_level_n0(p)
    for n in (n0, n0 + 1):
        mesh = build_hier_mesh(p, n)
        space = HierSpace(p, n)
        E = support_extension_matrix(mesh, space)
        h0 = F(1, 2**n0)
        for a, e in enumerate(mesh):
            if classify_region(e, n, n0)[0] == RIGHT_OF_3_8:
                assert all(mesh.elements[b].s0 >= h0 for b in E[a].indices)


@pytest.mark.parametrize("p,n", [(1, 3), (2, 2), (2, 3), (3, 2)])
def test_incidence_matches_brute_force(p, n):
    mesh = build_hier_mesh(p, n)
    space = HierSpace(p, n)
    A = incidence(mesh, space).toarray()
    for k, e in enumerate(mesh):
        assert sorted(np.flatnonzero(A[k])) == active_functions(space, e)


def test_extension_matrix_symmetric_and_reflexive():
    mesh = build_hier_mesh(2, 4)
    E = support_extension_matrix(mesh, HierSpace(2, 4))
    assert (E != E.T).nnz == 0
    assert np.all(E.diagonal())


def test_incidence_requires_matching_space():
    with pytest.raises(ValueError):
        incidence(build_hier_mesh(2, 3), HierSpace(2, 4))
