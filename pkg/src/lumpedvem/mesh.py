"""Polygonal meshes of the unit square: representation, the three generator
families (distorted quads, serendipity Q8, Lloyd-relaxed Voronoi), geometry
caches, regularity statistics, and line-oriented file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "CellGeometry",
    "MeshStats",
    "MeshFormatError",
    "polygon_area_centroid",
    "generate_mesh",
    "cell_geometry",
    "mesh_stats",
    "mesh_io_read",
    "mesh_io_write",
]

FAMILIES = ("distorted-quad", "serendipity-q8", "voronoi")


class MeshFormatError(ValueError):
    """Raised on malformed mesh files; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def polygon_area_centroid(vertices):
    """Signed shoelace area and centroid of a polygon given as an (m,2) array."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    if area == 0.0:
        return 0.0, v.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return float(area), np.array([cx, cy])


def _orient(p, q, r):
    """Sign of the cross product (q-p) x (r-p)."""
    v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return int(v > 0) - int(v < 0)


def _on_segment(p, q, r):
    """True if collinear point r lies within the bounding box of segment pq."""
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


def _segments_intersect(p1, q1, p2, q2):
    o1 = _orient(p1, q1, p2)
    o2 = _orient(p1, q1, q2)
    o3 = _orient(p2, q2, p1)
    o4 = _orient(p2, q2, q1)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p1, q1, p2):
        return True
    if o2 == 0 and _on_segment(p1, q1, q2):
        return True
    if o3 == 0 and _on_segment(p2, q2, p1):
        return True
    if o4 == 0 and _on_segment(p2, q2, q1):
        return True
    return False


@dataclass(frozen=True)
class CellGeometry:
    """Derived geometry of one polygonal cell."""

    area: float
    centroid: np.ndarray
    diameter: float       # h_E, max pairwise vertex distance
    edge_lengths: np.ndarray


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_min: float
    n_cells: int
    max_vertices_per_cell: int
    mean_vertices_per_cell: float
    total_area: float  # sum of |E|, for the coverage check


class Mesh:
    """Immutable polygonal mesh: vertex coordinates plus CCW cells.

    Construction validates orientation, simplicity, and edge incidence
    (every undirected edge shared by exactly one or two cells). Boundary
    detection is topological: boundary edges are those with incidence one.
    """

    def __init__(self, vertices, cells):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("vertex coordinates must be finite")
        self.cells = [np.asarray(c, dtype=np.intp) for c in cells]
        self._validate()
        self._build_edges()
        self._geom = [None] * len(self.cells)

    # -- validation -------------------------------------------------------

    def _validate(self):
        n = self.vertices.shape[0]
        for cid, cell in enumerate(self.cells):
            if cell.size < 3:
                raise ValueError(f"cell {cid} has fewer than 3 vertices")
            if np.any(cell < 0) or np.any(cell >= n):
                raise ValueError(f"cell {cid} references a vertex out of range")
            if len(set(cell.tolist())) != cell.size:
                raise ValueError(f"cell {cid} repeats a vertex")
            coords = self.vertices[cell]
            area, _ = polygon_area_centroid(coords)
            if area <= 0.0:
                raise ValueError(
                    f"cell {cid} has non-positive signed area {area:.3e} (not CCW?)"
                )
            self._check_simple(cid, coords)

    def _check_simple(self, cid, coords):
        m = coords.shape[0]
        for i in range(m):
            p1, q1 = coords[i], coords[(i + 1) % m]
            for j in range(i + 1, m):
                if j == i or (j + 1) % m == i or (i + 1) % m == j:
                    continue  # adjacent edges share a vertex
                p2, q2 = coords[j], coords[(j + 1) % m]
                if _segments_intersect(p1, q1, p2, q2):
                    raise ValueError(f"cell {cid} is self-intersecting")

    def _build_edges(self):
        incidence = {}
        for cid, cell in enumerate(self.cells):
            m = cell.size
            for i in range(m):
                a, b = int(cell[i]), int(cell[(i + 1) % m])
                key = (a, b) if a < b else (b, a)
                incidence.setdefault(key, []).append(cid)
        for key, cids in incidence.items():
            if len(cids) > 2:
                raise ValueError(f"edge {key} shared by {len(cids)} cells")
        self.edge_cells = incidence
        self.boundary_edges = frozenset(k for k, v in incidence.items() if len(v) == 1)
        bverts = set()
        for a, b in self.boundary_edges:
            bverts.add(a)
            bverts.add(b)
        self.boundary_vertices = frozenset(bverts)

    # -- accessors ---------------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_coords(self, cell_id):
        return self.vertices[self.cells[cell_id]]

    def geometry(self, cell_id):
        """Cached CellGeometry for one cell."""
        geom = self._geom[cell_id]
        if geom is None:
            geom = cell_geometry(self, cell_id)
            self._geom[cell_id] = geom
        return geom


def cell_geometry(mesh, cell_id):
    """Area (shoelace), centroid, diameter, and edge lengths of a cell."""
    if not 0 <= cell_id < mesh.n_cells:
        raise IndexError(f"cell id {cell_id} out of range")
    coords = mesh.cell_coords(cell_id)
    area, centroid = polygon_area_centroid(coords)
    if area <= 0.0:
        raise ValueError(f"cell {cell_id} is degenerate (area {area:.3e})")
    diffs = coords[:, None, :] - coords[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(axis=2)).max())
    edge_lengths = np.linalg.norm(np.roll(coords, -1, axis=0) - coords, axis=1)
    return CellGeometry(
        area=float(area), centroid=centroid, diameter=diameter, edge_lengths=edge_lengths
    )


def mesh_stats(mesh):
    diams = [mesh.geometry(c).diameter for c in range(mesh.n_cells)]
    sizes = [cell.size for cell in mesh.cells]
    total = sum(mesh.geometry(c).area for c in range(mesh.n_cells))
    return MeshStats(
        h_max=max(diams),
        h_min=min(diams),
        n_cells=mesh.n_cells,
        max_vertices_per_cell=max(sizes),
        mean_vertices_per_cell=float(np.mean(sizes)),
        total_area=total,
    )


# -- generators -------------------------------------------------------------


def generate_mesh(family, n, distortion=0.0, lloyd_iters=0, seed=0):
    """Generate one of the three unit-square mesh families.

    distorted-quad   n x n structured quads; interior vertices jittered by a
                     random offset of magnitude <= distortion/n.
    serendipity-q8   same grid with a collinear midpoint vertex inserted on
                     every edge, giving 8-vertex cells.
    voronoi          clipped Voronoi diagram of n^2 seeds after ``lloyd_iters``
                     Lloyd relaxation sweeps.

    Boundary vertices never move. Deterministic for a fixed seed.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 <= distortion < 0.5:
        raise ValueError("distortion must lie in [0, 0.5)")
    family = family.lower()
    if family == "distorted-quad":
        return _structured_quads(n, distortion, seed, midpoints=False)
    if family == "serendipity-q8":
        return _structured_quads(n, distortion, seed, midpoints=True)
    if family == "voronoi":
        return _voronoi_mesh(n, lloyd_iters, seed)
    raise ValueError(f"unknown mesh family {family!r}; choose from {FAMILIES}")


def _structured_quads(n, distortion, seed, midpoints):
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    if distortion > 0.0:
        interior = []
        for i in range(n + 1):
            for j in range(n + 1):
                if 0 < i < n and 0 < j < n:
                    interior.append(i * (n + 1) + j)
        # polar sampling keeps the offset magnitude <= distortion/n
        r = rng.uniform(0.0, distortion / n, size=len(interior))
        phi = rng.uniform(0.0, 2.0 * math.pi, size=len(interior))
        verts[interior, 0] += r * np.cos(phi)
        verts[interior, 1] += r * np.sin(phi)

    def vid(i, j):
        return i * (n + 1) + j

    quads = []
    for i in range(n):
        for j in range(n):
            quads.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])

    for q, cell in enumerate(quads):
        area, _ = polygon_area_centroid(verts[cell])
        if area <= 0.0:
            raise ValueError(
                f"distortion {distortion} inverted cell {q}; lower the distortion"
            )

    if not midpoints:
        return Mesh(verts, quads)

    # insert edge midpoints after jitter so they stay collinear with endpoints
    verts_list = [tuple(v) for v in verts]
    mid_id = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in mid_id:
            p = 0.5 * (verts[a] + verts[b])
            mid_id[key] = len(verts_list)
            verts_list.append((p[0], p[1]))
        return mid_id[key]

    cells8 = []
    for cell in quads:
        poly = []
        for t in range(4):
            a, b = cell[t], cell[(t + 1) % 4]
            poly.append(a)
            poly.append(midpoint(a, b))
        cells8.append(poly)
    return Mesh(np.array(verts_list), cells8)


_UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _clip_halfplane(poly, point, normal):
    """Clip a CCW polygon against {x : (x - point) . normal <= 0}."""
    d = (poly - point) @ normal
    out = []
    m = poly.shape[0]
    for i in range(m):
        j = (i + 1) % m
        di, dj = d[i], d[j]
        if di <= 0.0:
            out.append(poly[i])
        if (di < 0.0 < dj) or (dj < 0.0 < di):
            t = di / (di - dj)
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out) if out else np.empty((0, 2))


def _voronoi_cells(seeds):
    """Unit-square-clipped Voronoi cell polygons, one per seed.

    Each cell starts as the square and is clipped by perpendicular-bisector
    half-planes, nearest seeds first; clipping stops once the next bisector
    cannot reach the current polygon.
    """
    m = seeds.shape[0]
    cells = []
    for i in range(m):
        si = seeds[i]
        order = np.argsort(((seeds - si) ** 2).sum(axis=1))
        poly = _UNIT_SQUARE.copy()
        for j in order[1:]:
            dvec = seeds[j] - si
            dist = math.hypot(dvec[0], dvec[1])
            reach = np.sqrt(((poly - si) ** 2).sum(axis=1)).max()
            if 0.5 * dist > reach:
                break
            poly = _clip_halfplane(poly, 0.5 * (si + seeds[j]), dvec)
            if poly.shape[0] < 3:
                raise ValueError("Voronoi cell collapsed during clipping")
        cells.append(poly)
    return cells


class _VertexPool:
    """Merges nearly-coincident vertices (within ``tol``) into shared indices."""

    def __init__(self, tol=1e-9):
        self.tol = tol
        self.coords = []
        self._buckets = {}

    def index(self, p):
        kx, ky = int(math.floor(p[0] / self.tol)), int(math.floor(p[1] / self.tol))
        for bx in (kx - 1, kx, kx + 1):
            for by in (ky - 1, ky, ky + 1):
                for idx in self._buckets.get((bx, by), ()):
                    q = self.coords[idx]
                    if abs(q[0] - p[0]) <= self.tol and abs(q[1] - p[1]) <= self.tol:
                        return idx
        idx = len(self.coords)
        self.coords.append((float(p[0]), float(p[1])))
        self._buckets.setdefault((kx, ky), []).append(idx)
        return idx


def _voronoi_mesh(n, lloyd_iters, seed):
    if lloyd_iters < 0:
        raise ValueError("lloyd_iters must be >= 0")
    rng = np.random.default_rng(seed)
    m = n * n

    for attempt in range(5):
        seeds = rng.uniform(0.0, 1.0, size=(m, 2))
        seeds = _reject_close_seeds(seeds, rng)
        try:
            for _ in range(lloyd_iters):
                cells = _voronoi_cells(seeds)
                seeds = np.array(
                    [polygon_area_centroid(poly)[1] for poly in cells]
                )
            polys = _voronoi_cells(seeds)
            pool = _VertexPool()
            index_cells = []
            for poly in polys:
                ids = [pool.index(p) for p in poly]
                dedup = [ids[i] for i in range(len(ids)) if ids[i] != ids[i - 1]]
                if len(dedup) < 3:
                    raise ValueError("degenerate Voronoi cell after merging")
                index_cells.append(dedup)
            return Mesh(np.array(pool.coords), index_cells)
        except ValueError:
            if attempt == 4:
                raise
            # rare near-degenerate configuration: retry with fresh seeds from
            # the same generator stream (still deterministic in ``seed``)
            continue


def _reject_close_seeds(seeds, rng, tol=1e-9):
    for _ in range(100):
        d2 = ((seeds[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        bad = np.unique(np.where(d2 < tol * tol)[0])
        if bad.size == 0:
            return seeds
        seeds[bad] = rng.uniform(0.0, 1.0, size=(bad.size, 2))
    raise ValueError("could not separate Voronoi seeds")


# -- file I/O ----------------------------------------------------------------


def mesh_io_write(mesh, path):
    """Write the line-oriented text format (17 significant digits)."""
    lines = ["vem-mesh 1", f"vertices {mesh.n_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    lines.append(f"cells {mesh.n_cells}")
    for cell in mesh.cells:
        lines.append(" ".join([str(cell.size)] + [str(int(v)) for v in cell]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def mesh_io_read(path):
    """Read the mesh text format; '#' comments and blank lines are ignored."""
    with open(path) as fh:
        raw = fh.readlines()

    items = []  # (line_number, stripped content)
    for ln, line in enumerate(raw, start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            items.append((ln, body))
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(items):
            raise MeshFormatError(f"unexpected end of file, expected {what}",
                                  line=len(raw))
        item = items[pos]
        pos += 1
        return item

    ln, header = take("header")
    if header.split() != ["vem-mesh", "1"]:
        raise MeshFormatError(f"bad header {header!r}, expected 'vem-mesh 1'", line=ln)

    ln, vline = take("vertex count")
    parts = vline.split()
    if len(parts) != 2 or parts[0] != "vertices":
        raise MeshFormatError(f"expected 'vertices <N>', got {vline!r}", line=ln)
    try:
        nverts = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"bad vertex count {parts[1]!r}", line=ln) from None

    verts = np.empty((nverts, 2))
    for i in range(nverts):
        ln, line = take(f"vertex {i}")
        parts = line.split()
        if len(parts) != 2:
            raise MeshFormatError(f"expected two coordinates, got {line!r}", line=ln)
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {line!r}", line=ln) from None

    ln, cline = take("cell count")
    parts = cline.split()
    if len(parts) != 2 or parts[0] != "cells":
        raise MeshFormatError(f"expected 'cells <M>', got {cline!r}", line=ln)
    ncells = int(parts[1])

    cells = []
    for c in range(ncells):
        ln, line = take(f"cell {c}")
        parts = line.split()
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"bad cell line {line!r}", line=ln) from None
        if not vals or len(vals) != vals[0] + 1:
            raise MeshFormatError(
                f"cell line count mismatch in {line!r}", line=ln)
        ids = vals[1:]
        if any(v < 0 or v >= nverts for v in ids):
            raise MeshFormatError(
                f"cell {c} references vertex out of range in {line!r}", line=ln)
        area, _ = polygon_area_centroid(verts[ids])
        if area <= 0.0:
            raise MeshFormatError(f"cell {c} is not CCW", line=ln)
        cells.append(ids)

    if pos != len(items):
        ln, extra = items[pos]
        raise MeshFormatError(f"trailing content {extra!r}", line=ln)
    return Mesh(verts, cells)
