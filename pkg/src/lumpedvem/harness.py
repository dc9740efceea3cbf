"""Manufactured-solution convergence studies: exact fields, projector-based
error norms, refinement sweeps across the mesh families, and result emission."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .assembly import LoadAssembler, assemble_system
from .mesh import generate_mesh, mesh_stats
from .poly import polygon_quadrature
from .projectors import DofMap, build_mesh_packs, interpolate_dofs
from .spectral import lambda_max_power_relaxed
from .timeint import InstabilityError, integrate, make_tableau

__all__ = [
    "ManufacturedCase",
    "ErrorReport",
    "EOCTable",
    "DtPolicy",
    "manufactured_case",
    "error_norms",
    "run_convergence",
    "emit_outputs",
]


@dataclass(frozen=True)
class ManufacturedCase:
    """Analytic fields of the benchmark problem du/dt - Lap u = f on the unit
    square with homogeneous Dirichlet data."""

    u: callable        # u(t, x, y)
    grad_u: callable   # (t, x, y) -> (ux, uy)
    u0: callable       # u0(x, y)
    f: callable        # f(t, x, y)


def manufactured_case():
    """u = e^t sin(pi x) sin(pi y), hence f = (1 + 2 pi^2) u."""
    pi = math.pi

    def u(t, x, y):
        return np.exp(t) * np.sin(pi * x) * np.sin(pi * y)

    def grad_u(t, x, y):
        et = np.exp(t)
        return (
            pi * et * np.cos(pi * x) * np.sin(pi * y),
            pi * et * np.sin(pi * x) * np.cos(pi * y),
        )

    def u0(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def f(t, x, y):
        return (1.0 + 2.0 * pi**2) * np.exp(t) * np.sin(pi * x) * np.sin(pi * y)

    return ManufacturedCase(u=u, grad_u=grad_u, u0=u0, f=f)


def expand_free(system, u_free):
    """Re-embed a free-DOF vector into the full numbering with zeros on the
    Dirichlet-constrained entries."""
    full = np.zeros(system.n_total)
    full[system.free_dofs] = u_free
    return full


def error_norms(mesh, k, packs, u_full, case, t, order=None):
    """Global L2 and H1 errors of the projected discrete solution.

    Per element the computable surrogates are used: the L2 projection for the
    L2 error and the gradient of the energy projection for the H1 seminorm
    error, both integrated with a rule well beyond the scheme's accuracy so
    quadrature cannot pollute observed orders.
    """
    if order is None:
        order = 2 * k + 8
    dof_map = DofMap(mesh, k)
    err2_l2 = 0.0
    err2_h1 = 0.0
    for cid in range(mesh.n_cells):
        pack = packs[cid]
        geom = mesh.geometry(cid)
        local = u_full[dof_map.cell_dofs(cid)]
        coeff0 = pack.P_zero @ local
        coeffn = pack.P_nabla @ local
        pts, w = polygon_quadrature(pack.verts, order, centroid=geom.centroid,
                                    cell_id=cid)
        vals = pack.basis.eval(pts)
        grads = pack.basis.eval_grad(pts)
        diff = case.u(t, pts[:, 0], pts[:, 1]) - vals @ coeff0
        err2_l2 += float(w @ diff**2)
        gx, gy = case.grad_u(t, pts[:, 0], pts[:, 1])
        dgx = gx - grads[:, :, 0] @ coeffn
        dgy = gy - grads[:, :, 1] @ coeffn
        err2_h1 += float(w @ (dgx**2 + dgy**2))
    return math.sqrt(err2_l2), math.sqrt(err2_h1)


@dataclass(frozen=True)
class ErrorReport:
    """One refinement level of a convergence study."""

    level: int
    n: int
    h_max: float
    h_min: float
    n_free: int
    err_l2: float
    err_h1: float
    dt: float
    lambda_max: float
    wall_time: float
    stable: bool = True


@dataclass(frozen=True)
class EOCTable:
    rows: tuple
    eoc_l2: tuple  # between consecutive rows, against h_max
    eoc_h1: tuple


@dataclass(frozen=True)
class DtPolicy:
    """Time-step selection: kind 'spectral' uses safety * C_ssp * dt_FE;
    kind 'theta' uses dt = theta * h_min^2, with theta calibrated on the
    first level when not given."""

    kind: str
    value: float = None  # safety factor, or theta (None -> calibrate)

    def __post_init__(self):
        if self.kind not in ("spectral", "theta"):
            raise ValueError("dt policy kind must be 'spectral' or 'theta'")
        if self.kind == "spectral" and (self.value is None or self.value <= 0):
            raise ValueError("spectral policy needs a positive safety factor")

    @staticmethod
    def parse(text):
        """Parse 'spectral:<safety>' or 'theta:<value>' or bare 'theta'."""
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind == "spectral":
            return DtPolicy("spectral", float(arg) if arg else 0.9)
        if kind == "theta":
            return DtPolicy("theta", float(arg) if arg else None)
        raise ValueError(f"bad dt policy {text!r}")


def _eoc(errs, hs):
    out = []
    for i in range(len(errs) - 1):
        if errs[i] > 0 and errs[i + 1] > 0 and math.isfinite(errs[i + 1]):
            out.append(math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]))
        else:
            out.append(math.nan)
    return out


def run_convergence(
    family,
    levels,
    k=1,
    integrator="ssprk3",
    dt_policy=DtPolicy("spectral", 0.9),
    delta=0.1,
    seed=0,
    distortion=0.3,
    lloyd_iters=3,
    t_end=1.0,
    tol_eig=1e-8,
    threads=1,
):
    """Refinement sweep: per level, mesh -> system -> lambda_max -> dt ->
    explicit integration to t_end -> errors at t_end. EOC is measured against
    h_max. A level that goes non-finite is kept but marked unstable."""
    if len(levels) < 2:
        raise ValueError("need at least 2 refinement levels")
    if isinstance(dt_policy, str):
        dt_policy = DtPolicy.parse(dt_policy)
    tableau = make_tableau(integrator)
    case = manufactured_case()
    theta = dt_policy.value

    rows = []
    for lvl, n in enumerate(levels):
        start = time.perf_counter()
        mesh = generate_mesh(family, n, distortion=distortion,
                             lloyd_iters=lloyd_iters, seed=seed + 1000003 * lvl)
        stats = mesh_stats(mesh)
        packs = build_mesh_packs(mesh, k, threads=threads)
        dof_map = DofMap(mesh, k)
        system = assemble_system(mesh, k, delta=delta, packs=packs,
                                 dof_map=dof_map)
        spec = lambda_max_power_relaxed(system.K_h, system.M_lumped,
                                        tol=tol_eig, seed=seed)
        dt_ssp = tableau.c_ssp * spec.dt_fe
        if dt_policy.kind == "spectral":
            dt = dt_policy.value * dt_ssp
        else:
            if theta is None:  # calibrate on the first level
                theta = 0.9 * dt_ssp / stats.h_min**2
            dt = theta * stats.h_min**2
        stable_config = dt <= dt_ssp * (1.0 + 1e-12)

        loader = LoadAssembler(mesh, k, packs, dof_map, system)
        u0 = interpolate_dofs(mesh, k, case.u0, dof_map=dof_map)[system.free_dofs]
        stable = stable_config
        err_l2 = err_h1 = math.nan
        try:
            final, _ = integrate(system, lambda t: loader(case.f, t), tableau,
                                 u0, dt, t_end)
            err_l2, err_h1 = error_norms(
                mesh, k, packs, expand_free(system, final.u), case, t_end
            )
        except InstabilityError:
            stable = False
        rows.append(
            ErrorReport(
                level=lvl,
                n=n,
                h_max=stats.h_max,
                h_min=stats.h_min,
                n_free=system.n_free,
                err_l2=err_l2,
                err_h1=err_h1,
                dt=dt,
                lambda_max=spec.lambda_max,
                wall_time=time.perf_counter() - start,
                stable=stable,
            )
        )
    hs = [r.h_max for r in rows]
    return EOCTable(
        rows=tuple(rows),
        eoc_l2=tuple(_eoc([r.err_l2 for r in rows], hs)),
        eoc_h1=tuple(_eoc([r.err_h1 for r in rows], hs)),
    )


_CSV_COLUMNS = (
    "family,k,integrator,level,n,h_max,h_min,n_free,lambda_max,dt,"
    "err_l2,err_h1,eoc_l2,eoc_h1,wall_time_s"
)


def emit_outputs(table, csv_path, svg_path=None, config=None, family="",
                 k=1, integrator=""):
    """Write the convergence CSV (with the resolved config echoed as a comment
    header) and, optionally, a log-log SVG with reference slopes 1 and 2."""
    if not table.rows:
        raise ValueError("empty table")
    lines = []
    if config:
        lines.append(f"# config: {config}")
    lines.append(_CSV_COLUMNS)
    for i, r in enumerate(table.rows):
        eoc_l2 = f"{table.eoc_l2[i - 1]:.6g}" if i > 0 else ""
        eoc_h1 = f"{table.eoc_h1[i - 1]:.6g}" if i > 0 else ""
        lines.append(
            f"{family},{k},{integrator},{r.level},{r.n},{r.h_max:.17g},"
            f"{r.h_min:.17g},{r.n_free},{r.lambda_max:.17g},{r.dt:.17g},"
            f"{r.err_l2:.17g},{r.err_h1:.17g},{eoc_l2},{eoc_h1},"
            f"{r.wall_time:.6g}"
        )
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if svg_path:
        with open(svg_path, "w") as fh:
            fh.write(_render_svg(table))


def _render_svg(table, width=640, height=480, margin=60):
    """Deterministic hand-rolled log-log error plot: one polyline per norm
    plus dashed reference lines of slope 1 and 2."""
    hs = np.array([r.h_max for r in table.rows])
    el2 = np.array([r.err_l2 for r in table.rows])
    eh1 = np.array([r.err_h1 for r in table.rows])
    finite = np.isfinite(el2) & np.isfinite(eh1) & (el2 > 0) & (eh1 > 0)
    hs, el2, eh1 = hs[finite], el2[finite], eh1[finite]
    if hs.size == 0:
        raise ValueError("no finite rows to plot")

    lx = np.log10(hs)
    all_y = np.log10(np.concatenate([el2, eh1]))
    x0, x1 = lx.min(), lx.max()
    y0, y1 = all_y.min(), all_y.max()
    if x1 - x0 < 1e-9:
        x1 = x0 + 1.0
    pad = 0.35 * max(y1 - y0, 1.0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    def polyline(xs, ys, stroke, cls, dashed=False):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        return (
            f'<polyline class="{cls}" fill="none" stroke="{stroke}"'
            f' stroke-width="1.5"{dash} points="{pts}" />'
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="#444" />',
    ]
    parts.append(polyline(lx, np.log10(el2), "#1f77b4", "err-l2"))
    parts.append(polyline(lx, np.log10(eh1), "#d62728", "err-h1"))
    # reference slopes anchored at the finest point of each curve
    for slope, err, color in ((2, el2, "#1f77b4"), (1, eh1, "#d62728")):
        yref = np.log10(err[-1]) + slope * (lx - lx[-1])
        parts.append(
            polyline(lx, yref, color, f"ref-slope-{slope}", dashed=True)
        )
    labels = [
        (sx(lx.mean()), height - margin / 3, "log10 h_max"),
        (margin / 3, sy(all_y.mean()), "log10 error"),
    ]
    for x, y, text in labels:
        parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="13" '
            f'text-anchor="middle">{text}</text>'
        )
    parts.append(
        f'<text x="{width - margin}" y="{margin - 8}" font-size="12" '
        f'text-anchor="end">L2 (blue), H1 (red); dashed: slopes 1, 2</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
