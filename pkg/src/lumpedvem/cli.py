"""Command-line interface: mesh generation, single solves, convergence
studies, and spectral sweeps, all reproducible from --seed."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .assembly import LoadAssembler, assemble_system
from .harness import (
    DtPolicy,
    emit_outputs,
    error_norms,
    expand_free,
    manufactured_case,
    run_convergence,
)
from .mesh import FAMILIES, generate_mesh, mesh_io_read, mesh_io_write, mesh_stats
from .projectors import DofMap, build_mesh_packs, interpolate_dofs
from .spectral import (
    PowerIterationError,
    lambda_max_power_relaxed,
    verify_spectral_bound,
)
from .timeint import (
    INTEGRATORS,
    InstabilityError,
    integrate,
    make_tableau,
    write_energy_trace,
)

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _levels(text):
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None
    if len(values) < 2:
        raise argparse.ArgumentTypeError("need at least two levels")
    return values


def build_parser():
    parser = _Parser(prog="lumpedvem")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--delta", type=float, default=0.1)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tol-eig", type=float, default=None)
        p.add_argument("--verbose", action="store_true")

    p_mesh = sub.add_parser("mesh", help="generate a mesh file")
    p_mesh.add_argument("--family", choices=FAMILIES, required=True)
    p_mesh.add_argument("--n", type=int, required=True)
    p_mesh.add_argument("--distortion", type=float, default=0.3)
    p_mesh.add_argument("--lloyd-iters", type=int, default=3)
    p_mesh.add_argument("--out", required=True)
    common(p_mesh)

    p_solve = sub.add_parser("solve", help="solve the benchmark problem on a mesh")
    p_solve.add_argument("--mesh", required=True)
    p_solve.add_argument("--k", type=int, choices=(1, 2), default=1)
    p_solve.add_argument("--integrator", choices=INTEGRATORS, default="ssprk3")
    p_solve.add_argument("--dt-policy", default="spectral:0.9")
    p_solve.add_argument("--t-end", type=float, default=1.0)
    p_solve.add_argument("--out", default=None, help="energy trace CSV path")
    common(p_solve)

    p_conv = sub.add_parser("convergence", help="refinement study on a family")
    p_conv.add_argument("--family", choices=FAMILIES, required=True)
    p_conv.add_argument("--levels", type=_levels, required=True)
    p_conv.add_argument("--k", type=int, choices=(1, 2), default=1)
    p_conv.add_argument("--integrator", choices=INTEGRATORS, default="ssprk3")
    p_conv.add_argument("--dt-policy", default="spectral:0.9")
    p_conv.add_argument("--distortion", type=float, default=0.3)
    p_conv.add_argument("--lloyd-iters", type=int, default=3)
    p_conv.add_argument("--t-end", type=float, default=1.0)
    p_conv.add_argument("--out", required=True)
    p_conv.add_argument("--svg", default=None)
    common(p_conv)

    p_spec = sub.add_parser("spectral", help="lambda_max sweep over levels")
    p_spec.add_argument("--family", choices=FAMILIES, required=True)
    p_spec.add_argument("--levels", type=_levels, required=True)
    p_spec.add_argument("--k", type=int, choices=(1, 2), default=1)
    p_spec.add_argument("--distortion", type=float, default=0.3)
    p_spec.add_argument("--lloyd-iters", type=int, default=3)
    p_spec.add_argument("--out", default=None)
    common(p_spec)

    return parser


def _config_string(args, skip=("command", "verbose")):
    parts = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


def cmd_mesh(args):
    mesh = generate_mesh(args.family, args.n, distortion=args.distortion,
                         lloyd_iters=args.lloyd_iters, seed=args.seed)
    mesh_io_write(mesh, args.out)
    stats = mesh_stats(mesh)
    print(f"wrote {args.out}: {stats.n_cells} cells, h_max={stats.h_max:.6g}, "
          f"h_min={stats.h_min:.6g}")
    return 0


def cmd_solve(args):
    mesh = mesh_io_read(args.mesh)
    policy = DtPolicy.parse(args.dt_policy)
    tableau = make_tableau(args.integrator)
    case = manufactured_case()

    packs = build_mesh_packs(mesh, args.k, threads=args.threads)
    dof_map = DofMap(mesh, args.k)
    system = assemble_system(mesh, args.k, delta=args.delta, packs=packs,
                             dof_map=dof_map)
    spec = lambda_max_power_relaxed(system.K_h, system.M_lumped,
                                    tol=args.tol_eig or 1e-8, seed=args.seed)
    dt_ssp = tableau.c_ssp * spec.dt_fe
    if policy.kind == "spectral":
        dt = policy.value * dt_ssp
    else:
        theta = policy.value
        if theta is None:
            theta = 0.9 * dt_ssp / mesh_stats(mesh).h_min**2
        dt = theta * mesh_stats(mesh).h_min**2
    if dt > dt_ssp * (1.0 + 1e-12):
        print(f"warning: dt={dt:.6g} exceeds the SSP limit {dt_ssp:.6g}",
              file=sys.stderr)

    loader = LoadAssembler(mesh, args.k, packs, dof_map, system)
    u0 = interpolate_dofs(mesh, args.k, case.u0, dof_map=dof_map)[system.free_dofs]
    final, trace = integrate(system, lambda t: loader(case.f, t), tableau, u0,
                             dt, args.t_end, record_energy=True)
    if args.out:
        write_energy_trace(args.out, trace, config=_config_string(args))

    # growth detection: a stable run obeys the discrete Gronwall bound; leave
    # a generous margin so only genuine blow-up trips it
    f_end = loader(case.f, args.t_end)
    c_f2 = float(f_end @ (f_end / system.M_lumped))
    e0 = trace[0][2]
    bound2 = np.exp(args.t_end) * e0**2 + (1.0 + dt) * (np.exp(args.t_end) - 1.0) * c_f2
    if final.energy**2 > 100.0 * bound2:
        print(
            f"numerical failure: energy {final.energy:.3e} exceeds the "
            f"stability bound {np.sqrt(bound2):.3e} (dt={dt:.6g}, "
            f"limit {dt_ssp:.6g}); monotone growth detected",
            file=sys.stderr,
        )
        return NUMERICAL_ERROR

    err_l2, err_h1 = error_norms(mesh, args.k, packs,
                                 expand_free(system, final.u), case, args.t_end)
    print(f"lambda_max={spec.lambda_max:.6g} dt={dt:.6g} steps={final.step_index} "
          f"err_l2={err_l2:.6g} err_h1={err_h1:.6g}")
    return 0


def cmd_convergence(args):
    table = run_convergence(
        args.family,
        args.levels,
        k=args.k,
        integrator=args.integrator,
        dt_policy=DtPolicy.parse(args.dt_policy),
        delta=args.delta,
        seed=args.seed,
        distortion=args.distortion,
        lloyd_iters=args.lloyd_iters,
        t_end=args.t_end,
        tol_eig=args.tol_eig or 1e-8,
        threads=args.threads,
    )
    emit_outputs(table, args.out, svg_path=args.svg,
                 config=_config_string(args), family=args.family, k=args.k,
                 integrator=args.integrator)
    for i, row in enumerate(table.rows):
        eoc = ""
        if i > 0:
            eoc = f" eoc_l2={table.eoc_l2[i-1]:.3f} eoc_h1={table.eoc_h1[i-1]:.3f}"
        print(f"level {row.level}: n={row.n} h_max={row.h_max:.4g} "
              f"err_l2={row.err_l2:.4g} err_h1={row.err_h1:.4g}{eoc}")
    if any(not row.stable for row in table.rows):
        print("error: at least one level went unstable", file=sys.stderr)
        return NUMERICAL_ERROR
    return 0


def cmd_spectral(args):
    meshes = [
        generate_mesh(args.family, n, distortion=args.distortion,
                      lloyd_iters=args.lloyd_iters, seed=args.seed + 1000003 * i)
        for i, n in enumerate(args.levels)
    ]
    reports, flags = verify_spectral_bound(meshes, args.k, delta=args.delta,
                                           tol=args.tol_eig or 1e-10,
                                           seed=args.seed)
    header = "level,h_min,n_free,lambda_max,dt_fe,bound_product"
    lines = [f"# config: {_config_string(args)}", header]
    for i, rep in enumerate(reports):
        lines.append(
            f"{i},{rep.h_min:.17g},{rep.n_free},{rep.lambda_max:.17g},"
            f"{rep.dt_fe:.17g},{rep.bound_product:.17g}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    if any(flags):
        print("warning: bound product jumped by more than 2x between levels",
              file=sys.stderr)
    return 0


def run_command(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    if getattr(args, "verbose", False):
        print(f"config: {_config_string(args)}")
    try:
        if args.command == "mesh":
            return cmd_mesh(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "convergence":
            return cmd_convergence(args)
        if args.command == "spectral":
            return cmd_spectral(args)
    except (InstabilityError, PowerIterationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    raise AssertionError("unreachable")


def main():
    raise SystemExit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
