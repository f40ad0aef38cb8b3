import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wgds.polyquad import (CellBasis, EdgeBasis, QuadratureError, cell_quadrature, dim_P,
                           edge_quadrature, mass_matrix, monomial_exponents, polygon_area,
                           polygon_centroid, project)


def green_monomial(verts, a, b, npts=20):
    """int_P x^a y^b via Green: int x^(a+1) y^b / (a+1) dy around the boundary."""
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1)
    total = 0.0
    for i in range(len(verts)):
        p, q = verts[i], verts[(i + 1) % len(verts)]
        pts = p + s[:, None] * (q - p)
        total += 0.5 * w @ (pts[:, 0] ** (a + 1) * pts[:, 1] ** b) / (a + 1) * (q[1] - p[1])
    return total


def convex_polygon(draw_angles, radius=1.0, center=(0.3, -0.2)):
    ang = np.sort(np.asarray(draw_angles))
    return np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])


def test_dim_and_prefix_ordering():
    assert [dim_P(j) for j in range(4)] == [1, 3, 6, 10]
    assert monomial_exponents(1) == monomial_exponents(2)[:3]
    assert monomial_exponents(0) == ((0, 0),)


def test_rectangle_monomials_exact():
    verts = np.array([[0.0, -1.0], [np.pi, -1.0], [np.pi, 0.5], [0.0, 0.5]])
    r = cell_quadrature(verts, 8)
    for a in range(5):
        for b in range(5 - a):
            exact = (np.pi ** (a + 1) / (a + 1)) * ((0.5 ** (b + 1) - (-1.0) ** (b + 1)) / (b + 1))
            got = r.weights @ (r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert got == pytest.approx(exact, rel=1e-13, abs=1e-13)


def test_triangle_area_and_centroid():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    r = cell_quadrature(tri, 4)
    assert r.measure == pytest.approx(0.5, rel=1e-14)
    assert (r.weights @ r.points) / r.measure == pytest.approx([1 / 3, 1 / 3], rel=1e-13)
    assert polygon_area(tri) == 0.5
    assert polygon_centroid(tri) == pytest.approx([1 / 3, 1 / 3])


@given(st.lists(st.floats(0, 2 * np.pi, exclude_max=True), min_size=3, max_size=8, unique=True),
       st.integers(0, 6), st.integers(0, 6))
def test_polygon_rule_matches_green(angles, a, b):
    verts = convex_polygon(angles)
    if polygon_area(verts) < 1e-2 or np.min(np.diff(np.sort(angles))) < 1e-2:
        return
    deg = a + b
    r = cell_quadrature(verts, max(deg, 1))
    got = r.weights @ (r.points[:, 0] ** a * r.points[:, 1] ** b)
    assert got == pytest.approx(green_monomial(verts, a, b), rel=1e-10, abs=1e-12)


def test_non_star_polygon_rejected():
    # arrow-head: centroid falls outside the kernel
    verts = np.array([[0, 0], [4, 0], [4, 4], [3.9, 0.2], [0.1, 0.2]], dtype=float)
    with pytest.raises(QuadratureError):
        cell_quadrature(verts, 2)


def test_clockwise_rejected():
    verts = np.array([[0, 0], [0, 1], [1, 1.5], [1, 0]], dtype=float)
    with pytest.raises(QuadratureError):
        cell_quadrature(verts, 2)


def test_edge_rule_exact():
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    r = edge_quadrature(a, b, 6)
    assert r.measure == pytest.approx(5.0)
    # int over arclength s in [0,5] of s^6
    s = np.hypot(*(r.points - a).T)
    assert r.weights @ s ** 6 == pytest.approx(5.0 ** 7 / 7, rel=1e-13)


def test_cell_basis_gradient_fd():
    B = CellBasis(np.array([0.2, 0.1]), 0.7, 3)
    pts = np.array([[0.3, 0.4], [-0.1, 0.25]])
    G = B.grad(pts)
    eps = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        fd = (B.eval(pts + e) - B.eval(pts - e)) / (2 * eps)
        assert np.allclose(G[:, :, d], fd, atol=1e-8)


def test_edge_basis_orientation():
    E = EdgeBasis(np.array([1.0, 1.0]), np.array([1.0, 3.0]), 2)
    assert E.param(np.array([[1.0, 1.0], [1.0, 3.0], [1.0, 2.0]])) == pytest.approx([-1, 1, 0])
    V = E.eval(np.array([[1.0, 3.0]]))
    assert V == pytest.approx(np.ones((1, 3)))  # P_k(1) = 1


def test_mass_matrix_requires_exactness():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    B = CellBasis(np.array([0.5, 0.5]), math.sqrt(2), 2)
    with pytest.raises(QuadratureError):
        mass_matrix(B, cell_quadrature(verts, 3))
    M = mass_matrix(B, cell_quadrature(verts, 4))
    assert np.allclose(M, M.T) and np.linalg.eigvalsh(M).min() > 0


def test_project_reproduces_polynomial():
    verts = np.array([[0, 0], [2, 0], [2.5, 1], [1, 2], [-0.5, 1]], dtype=float)
    B = CellBasis(polygon_centroid(verts), 2.0, 2)
    r = cell_quadrature(verts, 6)
    c = np.array([1.0, -2.0, 0.5, 0.25, 3.0, -1.0])
    vals = B.eval(r.points) @ c
    assert project(B, r, vals) == pytest.approx(c, abs=1e-11)
