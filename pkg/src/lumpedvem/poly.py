"""Scaled monomial bases, exact polygon moments, edge Legendre polynomials,
and quadrature over polygons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "MonomialBasis",
    "QuadRule",
    "multi_indices",
    "monomial_basis",
    "monomial_eval",
    "polygon_moment",
    "monomial_grams",
    "edge_legendre_eval",
    "gauss_legendre",
    "triangle_rule",
    "polygon_quadrature",
    "integrate_polygon",
]


def multi_indices(k):
    """Multi-indices of total degree <= k in graded lexicographic order:
    (0,0),(1,0),(0,1),(2,0),(1,1),(0,2),...

    Every matrix built on top of the monomial basis assumes this ordering.
    """
    out = []
    for deg in range(k + 1):
        for a2 in range(deg + 1):
            out.append((deg - a2, a2))
    return out


@dataclass(frozen=True)
class MonomialBasis:
    """Basis of P_k(E) made of scaled monomials ((x-x_c)/h_E)^a1 ((y-y_c)/h_E)^a2."""

    k: int
    centroid: np.ndarray  # shape (2,)
    h: float              # polygon diameter h_E
    indices: tuple = field(default=None)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"polynomial degree must be >= 1, got k={self.k}")
        if self.indices is None:
            object.__setattr__(self, "indices", tuple(multi_indices(self.k)))

    @property
    def n(self):
        """Dimension N_k = (k+1)(k+2)/2."""
        return (self.k + 1) * (self.k + 2) // 2

    def scaled(self, points):
        """Map physical points (m,2) to scaled coordinates ((x-x_c)/h, (y-y_c)/h)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.centroid) / self.h

    def eval(self, points):
        """Values of all basis monomials at the given points, shape (m, N_k)."""
        sc = self.scaled(points)
        px = _power_table(sc[:, 0], self.k)
        py = _power_table(sc[:, 1], self.k)
        return np.stack([px[:, a1] * py[:, a2] for a1, a2 in self.indices], axis=1)

    def eval_grad(self, points):
        """Gradients of all basis monomials at the given points, shape (m, N_k, 2)."""
        sc = self.scaled(points)
        px = _power_table(sc[:, 0], self.k)
        py = _power_table(sc[:, 1], self.k)
        m = sc.shape[0]
        out = np.zeros((m, len(self.indices), 2))
        for j, (a1, a2) in enumerate(self.indices):
            if a1 > 0:
                out[:, j, 0] = a1 / self.h * px[:, a1 - 1] * py[:, a2]
            if a2 > 0:
                out[:, j, 1] = a2 / self.h * px[:, a1] * py[:, a2 - 1]
        return out


def _power_table(t, k):
    """Powers t^0..t^k as columns of an (m, k+1) array."""
    out = np.empty((t.shape[0], k + 1))
    out[:, 0] = 1.0
    for p in range(1, k + 1):
        out[:, p] = out[:, p - 1] * t
    return out


def monomial_basis(k, centroid, h):
    return MonomialBasis(k=k, centroid=np.asarray(centroid, dtype=float), h=float(h))


def monomial_eval(basis, alpha, p):
    """Value and gradient of the scaled monomial m_alpha at a single point.

    The gradient components carry the 1/h_E chain factor.
    """
    a1, a2 = alpha
    x, y = p
    xi = (x - basis.centroid[0]) / basis.h
    eta = (y - basis.centroid[1]) / basis.h
    val = xi**a1 * eta**a2
    gx = a1 / basis.h * xi ** (a1 - 1) * eta**a2 if a1 > 0 else 0.0
    gy = a2 / basis.h * xi**a1 * eta ** (a2 - 1) if a2 > 0 else 0.0
    return val, (gx, gy)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1], exact for degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def polygon_moment(vertices, basis, alpha):
    """Exact integral of the scaled monomial m_alpha over a simple CCW polygon.

    Reduced to edge integrals by the divergence theorem with the antiderivative
    A = h_E/(a1+1) * m_(a1+1,a2) taken in x, so that int_E m = sum_e int_e A dy.
    Each edge integral is Gauss-Legendre with ceil((|alpha|+2)/2) points, which
    is exact for the polynomial integrand.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.shape[0] < 3:
        raise ValueError("polygon needs at least 3 vertices")
    a1, a2 = alpha
    npts = (a1 + a2 + 2 + 1) // 2
    t, w = gauss_legendre(npts)
    s = 0.5 * (t + 1.0)  # map to [0,1]

    nxt = np.roll(verts, -1, axis=0)
    dy = nxt[:, 1] - verts[:, 1]
    total = 0.0
    for e in range(verts.shape[0]):
        if dy[e] == 0.0:
            continue
        pts = verts[e] + np.outer(s, nxt[e] - verts[e])
        xi = (pts[:, 0] - basis.centroid[0]) / basis.h
        eta = (pts[:, 1] - basis.centroid[1]) / basis.h
        a_vals = basis.h / (a1 + 1) * xi ** (a1 + 1) * eta**a2
        total += dy[e] * 0.5 * np.dot(w, a_vals)
    return total


def monomial_grams(vertices, basis):
    """Mass Gram H and stiffness Gram G of the monomial basis, both exact.

    H[a,b] = int m_a m_b (note m_a*m_b = m_(a+b) for scaled monomials), and
    G[a,b] = int grad m_a . grad m_b, expanded into moments of lower-degree
    monomials. H is SPD; G is PSD with the constant as its exact kernel.
    """
    idx = basis.indices
    n = len(idx)
    cache = {}

    def mom(a1, a2):
        key = (a1, a2)
        if key not in cache:
            cache[key] = polygon_moment(vertices, basis, key)
        return cache[key]

    h2 = basis.h * basis.h
    H = np.empty((n, n))
    G = np.zeros((n, n))
    for i, (a1, a2) in enumerate(idx):
        for j in range(i, n):
            b1, b2 = idx[j]
            H[i, j] = H[j, i] = mom(a1 + b1, a2 + b2)
            g = 0.0
            if a1 > 0 and b1 > 0:
                g += a1 * b1 * mom(a1 + b1 - 2, a2 + b2)
            if a2 > 0 and b2 > 0:
                g += a2 * b2 * mom(a1 + b1, a2 + b2 - 2)
            G[i, j] = G[j, i] = g / h2
    return H, G


def edge_legendre_eval(j, t):
    """Legendre polynomial of degree j on [-1,1], orthonormal in the averaged
    inner product (1/2) int_{-1}^{1} L_i L_j dt = delta_ij."""
    if j < 0:
        raise ValueError("degree must be >= 0")
    coeffs = np.zeros(j + 1)
    coeffs[j] = 1.0
    return math.sqrt(2 * j + 1) * np.polynomial.legendre.legval(t, coeffs)


@dataclass(frozen=True)
class QuadRule:
    """Quadrature rule on the reference triangle (0,0),(1,0),(0,1)."""

    points: np.ndarray   # (m, 2)
    weights: np.ndarray  # (m,), summing to the reference area 1/2


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Rule on the reference triangle exact for polynomials of total degree <= order.

    Built as a collapsed (Duffy) tensor Gauss rule: x = u, y = v(1-u) with
    Jacobian (1-u). All weights are positive and all points interior.
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    nu = (order + 2 + 1) // 2  # u-degree rises to order+1 from the Jacobian
    nv = (order + 1 + 1) // 2
    xu, wu = gauss_legendre(nu)
    xv, wv = gauss_legendre(nv)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = 0.25 * np.outer(wu, wv) * (1.0 - uu)
    pts = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    return QuadRule(points=pts, weights=ww.ravel())


def polygon_quadrature(vertices, order, centroid=None, cell_id=None):
    """Quadrature points and weights over a star-shaped polygon.

    Fan-triangulates from the centroid and maps a reference triangle rule to
    each fan triangle. Raises if a fan triangle has non-positive area (the
    cell is not star-shaped with respect to its centroid).
    """
    verts = np.asarray(vertices, dtype=float)
    if centroid is None:
        from .mesh import polygon_area_centroid

        _, centroid = polygon_area_centroid(verts)
    centroid = np.asarray(centroid, dtype=float)
    rule = triangle_rule(order)

    pts_out = []
    w_out = []
    nxt = np.roll(verts, -1, axis=0)
    for e in range(verts.shape[0]):
        p1 = verts[e] - centroid
        p2 = nxt[e] - centroid
        det = p1[0] * p2[1] - p1[1] * p2[0]  # = 2 * signed area of the fan triangle
        if det <= 0.0:
            where = f" in cell {cell_id}" if cell_id is not None else ""
            raise ValueError(
                f"fan triangle {e}{where} has non-positive area; "
                "polygon is not star-shaped from its centroid"
            )
        pts = centroid + rule.points[:, :1] * p1 + rule.points[:, 1:] * p2
        pts_out.append(pts)
        w_out.append(rule.weights * det)  # |Jacobian| = 2 * triangle area = det
    return np.vstack(pts_out), np.concatenate(w_out)


def integrate_polygon(f, vertices, order, centroid=None, cell_id=None):
    """Integrate a scalar field over a star-shaped polygon.

    ``f`` is called with vectorized coordinate arrays (x, y).
    """
    pts, w = polygon_quadrature(vertices, order, centroid=centroid, cell_id=cell_id)
    return float(np.dot(w, f(pts[:, 0], pts[:, 1])))
