"""Shared test utilities: random polygons, an independent triangle quadrature
oracle, and dense eigenvalue references."""

import math

import numpy as np

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_star_polygon(rng, n_min=3, n_max=8):
    """Simple CCW polygon, star-shaped around its interior anchor point.

    Vertices sit at jittered equispaced angles (gaps stay in [0.6, 1.4] of
    the mean, keeping the anchor strictly inside) with random radii, then the
    whole polygon is randomly scaled and shifted.
    """
    m = int(rng.integers(n_min, n_max + 1))
    jitter = rng.uniform(0.3, 0.7, size=m)
    ang = 2.0 * np.pi * (np.arange(m) + jitter) / m
    rad = rng.uniform(0.3, 1.0, size=m)
    verts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    scale = 10.0 ** rng.uniform(-2.0, 0.0)
    return verts * scale + rng.uniform(-1.0, 1.0, size=2)


# Classic 7-point rule on the reference triangle (0,0),(1,0),(0,1), exact for
# total degree 5; weights sum to the reference area 1/2.
_S15 = math.sqrt(15.0)
TRI7_POINTS = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0],
        [(6.0 + _S15) / 21.0, (6.0 + _S15) / 21.0],
        [(9.0 - 2.0 * _S15) / 21.0, (6.0 + _S15) / 21.0],
        [(6.0 + _S15) / 21.0, (9.0 - 2.0 * _S15) / 21.0],
        [(6.0 - _S15) / 21.0, (6.0 - _S15) / 21.0],
        [(9.0 + 2.0 * _S15) / 21.0, (6.0 - _S15) / 21.0],
        [(6.0 - _S15) / 21.0, (9.0 + 2.0 * _S15) / 21.0],
    ]
)
TRI7_WEIGHTS = np.array(
    [9.0 / 80.0]
    + [(155.0 + _S15) / 2400.0] * 3
    + [(155.0 - _S15) / 2400.0] * 3
)


def _tri7_integrate(f, a, b, c):
    """7-point rule mapped to the triangle (a, b, c)."""
    pts = a + TRI7_POINTS[:, :1] * (b - a) + TRI7_POINTS[:, 1:] * (c - a)
    det = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return 2.0 * det * float(np.dot(TRI7_WEIGHTS, f(pts[:, 0], pts[:, 1]))) / 2.0


def fan_quadrature_7pt(f, verts, centroid=None, subdivide=0):
    """Integrate f over a polygon by fan triangulation with the 7-point rule,
    optionally with uniform triangle subdivision for non-polynomial f.

    Deliberately independent of the library's quadrature path.
    """
    verts = np.asarray(verts, dtype=float)
    if centroid is None:
        # area-weighted centroid via the shoelace expansion
        x, y = verts[:, 0], verts[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = 0.5 * cross.sum()
        centroid = np.array(
            [((x + xn) * cross).sum() / (6 * area), ((y + yn) * cross).sum() / (6 * area)]
        )
    total = 0.0
    for e in range(verts.shape[0]):
        tri = [np.asarray(centroid), verts[e], verts[(e + 1) % verts.shape[0]]]
        total += _subdivided(f, tri, subdivide)
    return total


def _subdivided(f, tri, levels):
    if levels == 0:
        return _tri7_integrate(f, *tri)
    a, b, c = tri
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return (
        _subdivided(f, (a, ab, ca), levels - 1)
        + _subdivided(f, (ab, b, bc), levels - 1)
        + _subdivided(f, (ca, bc, c), levels - 1)
        + _subdivided(f, (ab, bc, ca), levels - 1)
    )


def dense_lambda_max(K, m_diag):
    """Largest generalized eigenvalue of (K, diag(m)) by symmetric scaling."""
    Kd = K.toarray() if hasattr(K, "toarray") else np.asarray(K)
    s = 1.0 / np.sqrt(np.asarray(m_diag, dtype=float))
    return float(np.linalg.eigvalsh(s[:, None] * Kd * s[None, :]).max())


def top_generalized_eigenvector(K, m_diag):
    Kd = K.toarray() if hasattr(K, "toarray") else np.asarray(K)
    s = 1.0 / np.sqrt(np.asarray(m_diag, dtype=float))
    vals, vecs = np.linalg.eigh(s[:, None] * Kd * s[None, :])
    return s * vecs[:, -1]
