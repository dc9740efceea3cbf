"""Local stiffness and mass matrices, row-sum mass lumping with flooring,
load vectors, and global assembly with Dirichlet elimination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .poly import polygon_quadrature
from .projectors import DofMap, build_mesh_packs

__all__ = [
    "LumpedWeights",
    "SystemMatrices",
    "LoadAssembler",
    "local_stiffness",
    "local_consistent_mass",
    "lumped_weights",
    "assemble_system",
    "assemble_load",
]

_TAU_FLOOR = 1e-12


def local_stiffness(pack):
    """Local stiffness: energy-projector consistency term plus dofi-dofi
    stabilization on the projection kernel.

    The stabilization weight is trace(consistency)/N_dof (floored away from
    zero), which keeps the scaling h-robust. Symmetrized so the global
    scatter is exactly symmetric.
    """
    cons = pack.P_nabla.T @ pack.G_stiff @ pack.P_nabla
    tau = max(np.trace(cons) / pack.layout.total, _TAU_FLOOR)
    Q = np.eye(pack.layout.total) - pack.D.T @ pack.P_nabla
    K = cons + tau * (Q.T @ Q)
    return 0.5 * (K + K.T)


def local_consistent_mass(pack):
    """Local consistent mass: L2-projector consistency plus |E|-scaled
    dofi-dofi stabilization on the L2-projection kernel."""
    cons = pack.P_zero.T @ pack.H @ pack.P_zero
    Q = np.eye(pack.layout.total) - pack.D.T @ pack.P_zero
    M = cons + pack.area * (Q.T @ Q)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class LumpedWeights:
    """Row-sum lumped weights of one element, raw and floored."""

    raw: np.ndarray      # s_i = integral of psi_i over the cell
    floored: np.ndarray  # max(s_i, delta |E| / N_dof)
    delta: float


def lumped_weights(pack, delta):
    """Row-sum lumped weights via the small polynomial system H w = c.

    c holds the monomial moments; contracting the moment matrix C (whose row
    for the constant is the vector of integrals of the basis functions, made
    computable by the enhancement property) against w yields
    s_i = integral of psi_i. Stabilization never enters: it vanishes in row
    sums. Raw weights are then floored to delta |E| / N_dof.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    c = pack.H[:, 0]  # moments of the monomials: int m_a = int m_a m_(0,0)
    w = np.linalg.solve(pack.H, c)
    raw = pack.C.T @ w
    floor = delta * pack.area / pack.layout.total
    return LumpedWeights(raw=raw, floored=np.maximum(raw, floor), delta=delta)


@dataclass(frozen=True)
class SystemMatrices:
    """Global system restricted to free (non-Dirichlet) DOFs."""

    K_h: sp.csr_matrix       # stiffness on free DOFs
    M_lumped: np.ndarray     # floored lumped diagonal on free DOFs
    free_map: np.ndarray     # global index -> free index, -1 when constrained
    free_dofs: np.ndarray    # free index -> global index
    n_free: int
    n_total: int
    total_raw_mass: float    # sum of raw lumped weights over all cells


def assemble_system(mesh, k, delta=0.1, packs=None, dof_map=None):
    """Assemble the global stiffness and floored lumped mass with homogeneous
    Dirichlet conditions eliminated.

    Boundary DOFs are the boundary vertices plus every moment on a boundary
    edge. Scatter order is fixed by cell order, so reassembly is
    bit-reproducible and K_h is exactly symmetric.
    """
    if k not in (1, 2):
        raise ValueError("solver paths support k in {1, 2}")
    if dof_map is None:
        dof_map = DofMap(mesh, k)
    if packs is None:
        packs = build_mesh_packs(mesh, k)

    n = dof_map.n_total
    boundary = dof_map.boundary_dofs()
    free_map = np.full(n, -1, dtype=np.intp)
    mask = np.ones(n, dtype=bool)
    mask[boundary] = False
    free_dofs = np.nonzero(mask)[0]
    if free_dofs.size == 0:
        raise ValueError("every DOF is constrained; nothing to solve")
    free_map[free_dofs] = np.arange(free_dofs.size)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    total_raw = 0.0
    for cid in range(mesh.n_cells):
        pack = packs[cid]
        gdofs = dof_map.cell_dofs(cid)
        K_E = local_stiffness(pack)
        lw = lumped_weights(pack, delta)
        total_raw += float(lw.raw.sum())
        diag[gdofs] += lw.floored
        ii, jj = np.meshgrid(gdofs, gdofs, indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(K_E.ravel())

    K_full = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    K_free = K_full[free_dofs][:, free_dofs].tocsr()
    K_free.sort_indices()
    return SystemMatrices(
        K_h=K_free,
        M_lumped=diag[free_dofs],
        free_map=free_map,
        free_dofs=free_dofs,
        n_free=free_dofs.size,
        n_total=n,
        total_raw_mass=total_raw,
    )


class LoadAssembler:
    """Evaluates the free-DOF load vector F_i = int f(t) Pi0 psi_i at any t.

    The per-cell quadrature (order 2k+8 by default) and the contraction
    through the L2 projector are precomputed once; each call only evaluates
    f at the stored points and applies one sparse matvec, which keeps
    runtime acceptable inside Runge-Kutta stage loops.
    """

    def __init__(self, mesh, k, packs, dof_map, system, order=None):
        if order is None:
            order = 2 * k + 8
        pts_all = []
        rows, cols, vals = [], [], []
        offset = 0
        for cid in range(mesh.n_cells):
            pack = packs[cid]
            geom = mesh.geometry(cid)
            pts, w = polygon_quadrature(
                pack.verts, order, centroid=geom.centroid, cell_id=cid
            )
            mono = pack.basis.eval(pts)  # (nq, N_k)
            # T_E[i, g] maps f-values at quad points to load entries
            T_E = pack.P_zero.T @ (mono * w[:, None]).T
            free = system.free_map[dof_map.cell_dofs(cid)]
            for loc, fidx in enumerate(free):
                if fidx < 0:
                    continue
                rows.append(np.full(pts.shape[0], fidx, dtype=np.intp))
                cols.append(offset + np.arange(pts.shape[0], dtype=np.intp))
                vals.append(T_E[loc])
            pts_all.append(pts)
            offset += pts.shape[0]
        self.points = np.vstack(pts_all)
        self.scatter = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(system.n_free, offset),
        ).tocsr()

    def __call__(self, f, t):
        fv = f(t, self.points[:, 0], self.points[:, 1])
        return self.scatter @ np.asarray(fv, dtype=float)


def assemble_load(mesh, k, packs, dof_map, system, f, t):
    """One-shot load assembly (builds the quadrature cache each call)."""
    return LoadAssembler(mesh, k, packs, dof_map, system)(f, t)
