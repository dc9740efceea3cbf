import math

import numpy as np
import pytest

from helpers import UNIT_SQUARE, fan_quadrature_7pt, random_star_polygon
from lumpedvem.mesh import generate_mesh, polygon_area_centroid
from lumpedvem.poly import (
    edge_legendre_eval,
    gauss_legendre,
    integrate_polygon,
    monomial_basis,
    monomial_eval,
    monomial_grams,
    multi_indices,
    polygon_moment,
    triangle_rule,
)

SQ_BASIS = monomial_basis(1, (0.5, 0.5), math.sqrt(2))


def test_multi_index_ordering():
    assert multi_indices(2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(multi_indices(3)) == 10  # (k+1)(k+2)/2


def test_monomial_eval_constant():
    val, grad = monomial_eval(SQ_BASIS, (0, 0), (0.3, 0.9))
    assert val == 1.0
    assert grad == (0.0, 0.0)


def test_monomial_eval_linear():
    val, grad = monomial_eval(SQ_BASIS, (1, 0), (1.0, 0.5))
    assert val == pytest.approx(0.5 / math.sqrt(2))
    assert grad[0] == pytest.approx(1.0 / math.sqrt(2))
    assert grad[1] == 0.0


def test_monomial_vanishes_at_centroid():
    basis = monomial_basis(2, (0.5, 0.5), math.sqrt(2))
    val, _ = monomial_eval(basis, (1, 1), (0.5, 0.5))
    assert val == 0.0


def test_unit_square_moments():
    assert polygon_moment(UNIT_SQUARE, SQ_BASIS, (0, 0)) == pytest.approx(1.0)
    assert abs(polygon_moment(UNIT_SQUARE, SQ_BASIS, (1, 0))) < 1e-15
    # 1D antiderivative: int_0^1 (x - 1/2)^2 dx = 1/12, scaled by h^2 = 2
    assert polygon_moment(UNIT_SQUARE, SQ_BASIS, (2, 0)) == pytest.approx(1 / 24)


def test_moment_matches_shoelace_area():
    rng = np.random.default_rng(12)
    for _ in range(20):
        verts = random_star_polygon(rng)
        area, centroid = polygon_area_centroid(verts)
        basis = monomial_basis(1, centroid, 1.0)
        assert abs(polygon_moment(verts, basis, (0, 0)) - area) < 1e-13


def test_unit_square_gram_is_diagonal():
    H, G = monomial_grams(UNIT_SQUARE, SQ_BASIS)
    assert np.allclose(np.diag(H), [1.0, 1 / 24, 1 / 24])
    assert np.abs(H - np.diag(np.diag(H))).max() < 1e-15
    assert np.abs(G[0]).max() == 0.0
    assert np.abs(G[:, 0]).max() == 0.0


def test_stiffness_gram_constant_row_is_zero_on_random_cells():
    rng = np.random.default_rng(5)
    for _ in range(10):
        verts = random_star_polygon(rng)
        _, centroid = polygon_area_centroid(verts)
        basis = monomial_basis(2, centroid, 1.3)
        _, G = monomial_grams(verts, basis)
        assert np.abs(G[0]).max() == 0.0


def test_mass_gram_against_independent_triangle_rule():
    rng = np.random.default_rng(8)
    for _ in range(10):
        verts = random_star_polygon(rng, n_min=4)
        area, centroid = polygon_area_centroid(verts)
        diam = max(
            np.linalg.norm(a - b) for a in verts for b in verts
        )
        for k in (1, 2):
            basis = monomial_basis(k, centroid, diam)
            H, _ = monomial_grams(verts, basis)
            for i, a in enumerate(basis.indices):
                for j, b in enumerate(basis.indices):
                    combined = (a[0] + b[0], a[1] + b[1])

                    def f(x, y, c=combined):
                        sx = (x - centroid[0]) / diam
                        sy = (y - centroid[1]) / diam
                        return sx ** c[0] * sy ** c[1]

                    # products have degree <= 4, inside the 7-point rule's range
                    ref = fan_quadrature_7pt(f, verts, centroid)
                    assert abs(H[i, j] - ref) < 1e-13 * max(area, 1.0)


def test_gram_mass_is_spd_on_generated_cells():
    mesh = generate_mesh("voronoi", 5, lloyd_iters=2, seed=2)
    for cid in range(mesh.n_cells):
        geom = mesh.geometry(cid)
        basis = monomial_basis(2, geom.centroid, geom.diameter)
        H, _ = monomial_grams(mesh.cell_coords(cid), basis)
        assert np.linalg.eigvalsh(H).min() > 0


def test_moment_exactness_against_fan_quadrature():
    # two independent integration routes must agree to near machine precision
    rng = np.random.default_rng(77)
    k = 2
    for _ in range(100):
        verts = random_star_polygon(rng)
        area, centroid = polygon_area_centroid(verts)
        basis = monomial_basis(k, centroid, 1.0)
        for a in multi_indices(k):
            for b in multi_indices(k):
                combined = (a[0] + b[0], a[1] + b[1])
                exact = polygon_moment(verts, basis, combined)

                def f(x, y, c=combined):
                    return ((x - centroid[0])) ** c[0] * ((y - centroid[1])) ** c[1]

                ref = fan_quadrature_7pt(f, verts, centroid)
                assert abs(exact - ref) < 1e-12 * max(area, 1.0)


def test_edge_legendre_normalization():
    assert edge_legendre_eval(0, 0.37) == pytest.approx(1.0)
    # (1/2) int_{-1}^{1} 3 t^2 dt = 1 fixes the degree-1 scale at sqrt(3)
    assert edge_legendre_eval(1, 1.0) == pytest.approx(math.sqrt(3))
    t, w = gauss_legendre(5)
    for i in range(4):
        for j in range(i, 4):
            prod = 0.5 * np.dot(w, edge_legendre_eval(i, t) * edge_legendre_eval(j, t))
            assert abs(prod - (1.0 if i == j else 0.0)) < 1e-14


def test_triangle_rule_invariants():
    for order in range(1, 13):
        rule = triangle_rule(order)
        assert rule.weights.sum() == pytest.approx(0.5)
        assert np.all(rule.weights > 0)
        x, y = rule.points[:, 0], rule.points[:, 1]
        assert np.all(x > 0) and np.all(y > 0) and np.all(x + y < 1)


def test_integrate_polygon_constant():
    rng = np.random.default_rng(4)
    for _ in range(10):
        verts = random_star_polygon(rng)
        area, _ = polygon_area_centroid(verts)
        val = integrate_polygon(lambda x, y: np.ones_like(x), verts, order=1)
        assert abs(val - area) < 1e-14 * max(1.0, area)


def test_integrate_polygon_matches_exact_moment():
    def f(x, y):
        return ((x - 0.5) / math.sqrt(2)) ** 2

    val = integrate_polygon(f, UNIT_SQUARE, order=4)
    assert abs(val - 1 / 24) < 1e-14


def test_integrate_polygon_smooth_field():
    def f(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    val = integrate_polygon(f, UNIT_SQUARE, order=10)
    assert val == pytest.approx(4 / math.pi**2, abs=1e-8)


def test_integrate_polygon_rejects_nonstar_fan():
    # centroid of this "L" shape fans into a negative triangle
    l_shape = np.array(
        [[0, 0], [4, 0], [4, 1], [1, 1], [1, 4], [0, 4]], dtype=float
    )
    bad_anchor = np.array([3.5, 3.5])  # outside the L
    with pytest.raises(ValueError, match="star-shaped"):
        integrate_polygon(lambda x, y: x, l_shape, order=2, centroid=bad_anchor,
                          cell_id=17)
