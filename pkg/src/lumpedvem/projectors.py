"""Per-element DOF layouts, the DOF matrix D, the energy projector and the
enhanced L2 projector, global DOF numbering, and DOF interpolation of
analytic fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import polygon_area_centroid
from .poly import (
    edge_legendre_eval,
    gauss_legendre,
    integrate_polygon,
    monomial_basis,
    monomial_grams,
    multi_indices,
    polygon_moment,
)

__all__ = [
    "DofLayout",
    "ProjectorPack",
    "DofMap",
    "build_dof_layout",
    "build_dof_matrix",
    "energy_projector_rhs",
    "build_energy_projector",
    "build_l2_projector",
    "build_projector_pack",
    "build_mesh_packs",
    "interpolate_dofs",
]

_SOLVE_RESIDUAL_REL = 1e-10


@dataclass(frozen=True)
class DofLayout:
    """Ordered local DOF slots of one element.

    Slots are ("vertex", i), then ("edge", e, j) with edges in CCW order and
    j ascending, then ("interior", alpha) in graded lexicographic order.
    """

    k: int
    n_vertices: int
    slots: tuple

    @property
    def total(self):
        return len(self.slots)

    @property
    def n_interior(self):
        return (self.k - 1) * self.k // 2

    def interior_slot(self, alpha):
        """Local index of the interior-moment slot for multi-index alpha."""
        base = self.n_vertices * (1 + (self.k - 1))
        return base + multi_indices(self.k - 2).index(tuple(alpha))


def build_dof_layout(n_vertices, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_vertices < 3:
        raise ValueError("a cell needs at least 3 vertices")
    slots = [("vertex", i) for i in range(n_vertices)]
    for e in range(n_vertices):
        for j in range(k - 1):
            slots.append(("edge", e, j))
    if k >= 2:
        for alpha in multi_indices(k - 2):
            slots.append(("interior", alpha))
    return DofLayout(k=k, n_vertices=n_vertices, slots=tuple(slots))


def _edge_orientations(vertex_ids):
    """+1 when the CCW edge direction runs from the smaller to the larger
    global vertex id; edge-moment parameters follow the ascending-id
    direction so that shared edges agree between neighboring cells."""
    ids = np.asarray(vertex_ids)
    nxt = np.roll(ids, -1)
    return np.where(ids < nxt, 1.0, -1.0)


def build_dof_matrix(verts, basis, layout, vertex_ids=None):
    """DOF matrix D with D[a, i] = chi_i(m_a), shape (N_k, N_dof)."""
    verts = np.asarray(verts, dtype=float)
    m = verts.shape[0]
    k = layout.k
    if vertex_ids is None:
        vertex_ids = np.arange(m)
    sigma = _edge_orientations(vertex_ids)

    D = np.zeros((basis.n, layout.total))
    D[:, :m] = basis.eval(verts).T

    if k >= 2:
        t, w = gauss_legendre(k + 1)  # exact for degree 2k+1 >= k + (k-2)
        nxt = np.roll(verts, -1, axis=0)
        col = m
        for e in range(m):
            # map t in [-1,1] to the edge along the CCW direction
            pts = 0.5 * (verts[e] + nxt[e]) + 0.5 * np.outer(t, nxt[e] - verts[e])
            vals = basis.eval(pts)  # (npts, N_k)
            for j in range(k - 1):
                lj = edge_legendre_eval(j, sigma[e] * t)
                D[:, col] = 0.5 * (vals * (w * lj)[:, None]).sum(axis=0)
                col += 1
        area = polygon_moment(verts, basis, (0, 0))
        for alpha in multi_indices(k - 2):
            a1, a2 = alpha
            slot = layout.interior_slot(alpha)
            for row, (b1, b2) in enumerate(basis.indices):
                D[row, slot] = polygon_moment(verts, basis, (a1 + b1, a2 + b2)) / area
    return D


def _laplacian_coeffs(alpha, basis):
    """Coefficients of Delta m_alpha in the degree k-2 monomial basis."""
    a1, a2 = alpha
    out = {}
    if a1 >= 2:
        out[(a1 - 2, a2)] = a1 * (a1 - 1) / basis.h**2
    if a2 >= 2:
        out[(a1, a2 - 2)] = a2 * (a2 - 1) / basis.h**2
    return out


def _edge_shape_matrix(k, sigma):
    """Coefficients (in powers of the CCW edge parameter t) of the P_k(e)
    shape functions dual to the edge DOF set: value at t=-1, value at t=+1,
    then moments against L_j taken in the ascending-id direction."""
    n = k + 1
    V = np.zeros((n, n))
    for p in range(n):
        V[0, p] = (-1.0) ** p
        V[1, p] = 1.0
    t, w = gauss_legendre(k + 1)
    for j in range(k - 1):
        lj = edge_legendre_eval(j, sigma * t)
        for p in range(n):
            V[2 + j, p] = 0.5 * np.dot(w, t**p * lj)
    return np.linalg.inv(V)  # column d = monomial coefficients of shape d


def energy_projector_rhs(verts, basis, layout, vertex_ids=None):
    """Right-hand side b[a, i] = int grad m_a . grad psi_i, integrated by
    parts: -int Delta m_a psi_i (interior moments) plus the boundary integral
    of (grad m_a . n) psi_i taken edge by edge from the known traces. The
    constant row is identically zero."""
    verts = np.asarray(verts, dtype=float)
    m = verts.shape[0]
    k = layout.k
    if vertex_ids is None:
        vertex_ids = np.arange(m)
    sigma = _edge_orientations(vertex_ids)
    area = polygon_moment(verts, basis, (0, 0))

    b = np.zeros((basis.n, layout.total))

    # interior part: Delta m_a lives in P_{k-2}, paired with interior moments
    if k >= 2:
        for row, alpha in enumerate(basis.indices):
            for beta, coeff in _laplacian_coeffs(alpha, basis).items():
                b[row, layout.interior_slot(beta)] -= coeff * area

    # boundary part, edge by edge; psi_i traces are polynomials known from
    # the edge's endpoint and moment DOFs
    t, w = gauss_legendre(k + 2)
    tp = np.column_stack([t**p for p in range(k + 1)])
    nxt = np.roll(verts, -1, axis=0)
    for e in range(m):
        tangent = nxt[e] - verts[e]
        length = float(np.hypot(tangent[0], tangent[1]))
        normal = np.array([tangent[1], -tangent[0]]) / length  # outward for CCW
        pts = 0.5 * (verts[e] + nxt[e]) + 0.5 * np.outer(t, tangent)
        gmn = basis.eval_grad(pts) @ normal  # (npts, N_k)
        shapes = tp @ _edge_shape_matrix(k, sigma[e])  # (npts, 2 + (k-1))
        # rows: integral over e of (grad m_a . n) * shape_d, for each a, d
        block = 0.5 * length * (gmn * w[:, None]).T @ shapes
        edge_slots = [0] * (k + 1)
        edge_slots[0] = e
        edge_slots[1] = (e + 1) % m
        for j in range(k - 1):
            edge_slots[2 + j] = m + e * (k - 1) + j
        for d, slot in enumerate(edge_slots):
            b[:, slot] += block[:, d]
    return b


def build_energy_projector(verts, basis, layout, D, grams, vertex_ids=None):
    """Monomial coefficients of the energy projection of each canonical basis
    function, shape (N_k, N_dof).

    Column i solves the gradient-orthogonality system; the constant mode is
    closed by matching the vertex average (k=1) or the cell average (k>=2).
    """
    verts = np.asarray(verts, dtype=float)
    m = verts.shape[0]
    k = layout.k
    H, G = grams
    area = polygon_moment(verts, basis, (0, 0))
    b = energy_projector_rhs(verts, basis, layout, vertex_ids=vertex_ids)

    # close the constant mode
    Gt = G.copy()
    bt = b.copy()
    if k == 1:
        Gt[0, :] = D[:, :m].sum(axis=1) / m
        bt[0, :] = 0.0
        bt[0, :m] = 1.0 / m
    else:
        Gt[0, :] = H[0, :] / area  # row of cell averages of the monomials
        bt[0, :] = 0.0
        bt[0, layout.interior_slot((0, 0))] = 1.0
    P = np.linalg.solve(Gt, bt)
    _check_residual(Gt, P, bt, "energy projector")
    return P


def build_l2_projector(verts, basis, layout, D, P_nabla, grams):
    """Monomial coefficients of the L2 projection of each canonical basis
    function, shape (N_k, N_dof), plus the moment matrix C with
    C[a, i] = int psi_i m_a.

    Moments of degree <= k-2 come straight from interior DOFs; degrees k-1
    and k are supplied by the enhancement property through the energy
    projection.
    """
    H, _ = grams
    k = layout.k
    area = polygon_moment(verts, basis, (0, 0))
    C = H @ P_nabla
    if k >= 2:
        for alpha in multi_indices(k - 2):
            row = basis.indices.index(alpha)
            C[row, :] = 0.0
            C[row, layout.interior_slot(alpha)] = area
    P = np.linalg.solve(H, C)
    _check_residual(H, P, C, "L2 projector")
    return P, C


def _check_residual(A, X, B, label):
    res = np.abs(A @ X - B).max()
    scale = max(np.abs(B).max(), 1.0)
    if res > _SOLVE_RESIDUAL_REL * scale:
        raise RuntimeError(f"{label} solve residual {res:.2e} exceeds tolerance")


@dataclass(frozen=True)
class ProjectorPack:
    """Everything projector-related for one element."""

    layout: DofLayout
    basis: object
    D: np.ndarray        # (N_k, N_dof) DOF matrix
    P_nabla: np.ndarray  # (N_k, N_dof) energy-projector coefficients
    P_zero: np.ndarray   # (N_k, N_dof) L2-projector coefficients
    C: np.ndarray        # (N_k, N_dof) moment matrix int psi_i m_a
    H: np.ndarray        # monomial mass Gram
    G_stiff: np.ndarray  # monomial stiffness Gram
    area: float
    verts: np.ndarray


def build_projector_pack(verts, k, vertex_ids=None):
    verts = np.asarray(verts, dtype=float)
    area, centroid = polygon_area_centroid(verts)
    if area <= 0.0:
        raise ValueError("polygon must be CCW with positive area")
    diffs = verts[:, None, :] - verts[None, :, :]
    h = float(np.sqrt((diffs**2).sum(axis=2)).max())
    basis = monomial_basis(k, centroid, h)
    layout = build_dof_layout(verts.shape[0], k)
    grams = monomial_grams(verts, basis)
    D = build_dof_matrix(verts, basis, layout, vertex_ids=vertex_ids)
    P_nabla = build_energy_projector(verts, basis, layout, D, grams,
                                     vertex_ids=vertex_ids)
    P_zero, C = build_l2_projector(verts, basis, layout, D, P_nabla, grams)
    return ProjectorPack(
        layout=layout, basis=basis, D=D, P_nabla=P_nabla, P_zero=P_zero, C=C,
        H=grams[0], G_stiff=grams[1], area=area, verts=verts,
    )


def build_mesh_packs(mesh, k, threads=1):
    """Projector packs for every cell; cells are independent, so the loop can
    run on a thread pool (results keep the cell order either way)."""

    def one(cid):
        return build_projector_pack(mesh.cell_coords(cid), k,
                                    vertex_ids=mesh.cells[cid])

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(mesh.n_cells)))
    return [one(cid) for cid in range(mesh.n_cells)]


class DofMap:
    """Global DOF numbering: vertex DOFs by vertex id, then edge DOFs by
    global edge id (lexicographic order of the undirected vertex pair), then
    interior DOFs by cell id."""

    def __init__(self, mesh, k):
        self.mesh = mesh
        self.k = k
        self.edge_ids = {e: i for i, e in enumerate(sorted(mesh.edge_cells))}
        self.n_edge_slots = (k - 1) * len(self.edge_ids)
        self.n_interior_per_cell = (k - 1) * k // 2
        self.n_total = (
            mesh.n_vertices
            + self.n_edge_slots
            + self.n_interior_per_cell * mesh.n_cells
        )
        self._cell_dofs = [self._build_cell(c) for c in range(mesh.n_cells)]

    def _build_cell(self, cid):
        mesh, k = self.mesh, self.k
        cell = mesh.cells[cid]
        m = cell.size
        idx = np.empty(m + m * (k - 1) + self.n_interior_per_cell, dtype=np.intp)
        idx[:m] = cell
        pos = m
        for e in range(m):
            a, b = int(cell[e]), int(cell[(e + 1) % m])
            eid = self.edge_ids[(a, b) if a < b else (b, a)]
            for j in range(k - 1):
                idx[pos] = mesh.n_vertices + eid * (k - 1) + j
                pos += 1
        base = mesh.n_vertices + self.n_edge_slots + cid * self.n_interior_per_cell
        for i in range(self.n_interior_per_cell):
            idx[pos] = base + i
            pos += 1
        return idx

    def cell_dofs(self, cid):
        return self._cell_dofs[cid]

    def boundary_dofs(self):
        """Global indices of Dirichlet-constrained DOFs: boundary vertices
        plus all moments on boundary edges."""
        mesh, k = self.mesh, self.k
        out = sorted(mesh.boundary_vertices)
        for edge in sorted(mesh.boundary_edges):
            eid = self.edge_ids[edge]
            for j in range(k - 1):
                out.append(mesh.n_vertices + eid * (k - 1) + j)
        return np.array(sorted(out), dtype=np.intp)


def interpolate_dofs(mesh, k, u, dof_map=None):
    """Global DOF vector of an analytic scalar field: vertex values, averaged
    edge Legendre moments, and cell-averaged interior moments."""
    if dof_map is None:
        dof_map = DofMap(mesh, k)
    out = np.zeros(dof_map.n_total)
    out[: mesh.n_vertices] = u(mesh.vertices[:, 0], mesh.vertices[:, 1])

    if k >= 2:
        t, w = gauss_legendre(k + 5)  # exact for degree 2k+9 > 2k+8
        for edge, eid in dof_map.edge_ids.items():
            a, b = edge  # a < b: ascending-id orientation
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            pts = 0.5 * (pa + pb) + 0.5 * np.outer(t, pb - pa)
            uv = u(pts[:, 0], pts[:, 1])
            for j in range(k - 1):
                val = 0.5 * np.dot(w * edge_legendre_eval(j, t), uv)
                out[mesh.n_vertices + eid * (k - 1) + j] = val

        order = 2 * k + 8
        for cid in range(mesh.n_cells):
            geom = mesh.geometry(cid)
            basis = monomial_basis(k, geom.centroid, geom.diameter)
            base = (
                mesh.n_vertices
                + dof_map.n_edge_slots
                + cid * dof_map.n_interior_per_cell
            )
            for i, alpha in enumerate(multi_indices(k - 2)):
                a1, a2 = alpha

                def f(x, y):
                    sx = (x - basis.centroid[0]) / basis.h
                    sy = (y - basis.centroid[1]) / basis.h
                    return u(x, y) * sx**a1 * sy**a2

                out[base + i] = (
                    integrate_polygon(f, mesh.cell_coords(cid), order,
                                      centroid=geom.centroid, cell_id=cid)
                    / geom.area
                )
    return out
