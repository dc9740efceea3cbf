import math
from types import SimpleNamespace

import numpy as np
import pytest

from lumpedvem.harness import (
    DtPolicy,
    EOCTable,
    ErrorReport,
    _eoc,
    emit_outputs,
    error_norms,
    expand_free,
    manufactured_case,
    run_convergence,
)
from lumpedvem.assembly import assemble_system
from lumpedvem.mesh import generate_mesh
from lumpedvem.projectors import DofMap, build_mesh_packs, interpolate_dofs
from lumpedvem.timeint import make_tableau

CASE = manufactured_case()


def test_manufactured_point_values():
    assert CASE.u(1.0, 0.5, 0.5) == pytest.approx(math.e)
    assert CASE.f(0.0, 0.5, 0.5) == pytest.approx(1.0 + 2.0 * math.pi**2)
    gx, gy = CASE.grad_u(0.0, 0.5, 0.5)
    assert abs(gx) < 1e-15 and abs(gy) < 1e-15
    assert CASE.u0(0.25, 0.75) == CASE.u(0.0, 0.25, 0.75)


def test_manufactured_boundary_and_initial_conditions():
    s = np.linspace(0.0, 1.0, 17)
    for t in (0.0, 0.4, 1.0):
        assert np.abs(CASE.u(t, s, np.zeros_like(s))).max() < 1e-15
        assert np.abs(CASE.u(t, np.ones_like(s), s)).max() < 1e-15


def test_manufactured_residual_vanishes():
    # independent analytic derivatives: du/dt = u and Lap u = -2 pi^2 u
    rng = np.random.default_rng(123)
    t = rng.uniform(0.0, 1.0, size=1000)
    x = rng.uniform(0.0, 1.0, size=1000)
    y = rng.uniform(0.0, 1.0, size=1000)
    sin_part = np.sin(np.pi * x) * np.sin(np.pi * y)
    du_dt = np.exp(t) * sin_part
    lap = -2.0 * np.pi**2 * np.exp(t) * sin_part
    residual = du_dt - lap - CASE.f(t, x, y)
    assert np.abs(residual).max() < 1e-9


def test_error_norms_zero_solution():
    mesh = generate_mesh("distorted-quad", 3, distortion=0.0, seed=0)
    packs = build_mesh_packs(mesh, 1)
    zero_case = SimpleNamespace(
        u=lambda t, x, y: np.zeros_like(x),
        grad_u=lambda t, x, y: (np.zeros_like(x), np.zeros_like(x)),
    )
    el2, eh1 = error_norms(mesh, 1, packs, np.zeros(DofMap(mesh, 1).n_total),
                           zero_case, 0.0)
    assert el2 == 0.0 and eh1 == 0.0


def test_error_norms_exact_for_linear_field():
    mesh = generate_mesh("distorted-quad", 4, distortion=0.3, seed=2)
    packs = build_mesh_packs(mesh, 1)
    linear = SimpleNamespace(
        u=lambda t, x, y: 2.0 * x - 3.0 * y + 0.5,
        grad_u=lambda t, x, y: (2.0 * np.ones_like(x), -3.0 * np.ones_like(x)),
    )
    u_h = interpolate_dofs(mesh, 1, lambda x, y: linear.u(0.0, x, y))
    el2, eh1 = error_norms(mesh, 1, packs, u_h, linear, 0.0)
    assert el2 < 1e-12 and eh1 < 1e-12


def test_interpolation_error_refines_at_second_order():
    errs = []
    for n in (8, 16):
        mesh = generate_mesh("distorted-quad", n, distortion=0.0, seed=0)
        packs = build_mesh_packs(mesh, 1)
        u_h = interpolate_dofs(mesh, 1, CASE.u0)
        el2, _ = error_norms(mesh, 1, packs, u_h, CASE, 0.0)
        errs.append(el2)
    assert errs[0] > 0
    assert errs[0] / errs[1] == pytest.approx(4.0, abs=0.5)


def test_eoc_for_exact_quadratic_halving():
    assert _eoc([0.04, 0.01], [0.25, 0.125]) == [pytest.approx(2.0)]


def test_dt_policy_parsing():
    assert DtPolicy.parse("spectral:0.8") == DtPolicy("spectral", 0.8)
    assert DtPolicy.parse("theta:12.5") == DtPolicy("theta", 12.5)
    assert DtPolicy.parse("theta") == DtPolicy("theta", None)
    with pytest.raises(ValueError):
        DtPolicy.parse("cfl:0.5")
    with pytest.raises(ValueError):
        DtPolicy("spectral", None)


def test_run_convergence_needs_two_levels():
    with pytest.raises(ValueError):
        run_convergence("distorted-quad", [4])


def test_theta_policy_calibration_stays_under_ssp_limit():
    table = run_convergence("distorted-quad", [4, 8], k=1, integrator="ssprk3",
                            dt_policy=DtPolicy("theta", None), seed=1,
                            t_end=0.05)
    c_ssp = make_tableau("ssprk3").c_ssp
    for row in table.rows:
        assert row.stable
        assert row.dt <= c_ssp * 2.0 / row.lambda_max * (1.0 + 1e-12)
    # calibration makes the first level match the spectral policy at 0.9
    first = table.rows[0]
    assert first.dt == pytest.approx(0.9 * c_ssp * 2.0 / first.lambda_max)


def _fake_table():
    rows = [
        ErrorReport(level=i, n=n, h_max=h, h_min=h / 2, n_free=9,
                    err_l2=el2, err_h1=eh1, dt=1e-3, lambda_max=100.0,
                    wall_time=0.5)
        for i, (n, h, el2, eh1) in enumerate(
            [(4, 0.25, 0.04, 0.4), (8, 0.125, 0.01, 0.2), (16, 0.0625, 0.0025, 0.1)]
        )
    ]
    hs = [r.h_max for r in rows]
    return EOCTable(rows=tuple(rows),
                    eoc_l2=tuple(_eoc([r.err_l2 for r in rows], hs)),
                    eoc_h1=tuple(_eoc([r.err_h1 for r in rows], hs)))


def test_emit_outputs_csv_structure(tmp_path):
    table = _fake_table()
    csv_path = tmp_path / "conv.csv"
    emit_outputs(table, csv_path, config="seed=0 family=test", family="test",
                 k=1, integrator="ssprk3")
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("# config:")
    assert lines[1].startswith("family,k,integrator,level,n,h_max")
    assert len(lines) == 2 + 3  # header lines + one row per level
    assert lines[2].split(",")[12] == ""  # first row has no EOC yet


def test_emit_outputs_svg_structure(tmp_path):
    table = _fake_table()
    svg_path = tmp_path / "conv.svg"
    emit_outputs(table, tmp_path / "conv.csv", svg_path=svg_path)
    svg = svg_path.read_text()
    assert svg.count("<polyline") == 4  # two error curves, two references
    assert svg.count("stroke-dasharray") == 2
    assert 'class="err-l2"' in svg and 'class="err-h1"' in svg
    assert 'class="ref-slope-1"' in svg and 'class="ref-slope-2"' in svg


def test_emit_outputs_is_deterministic(tmp_path):
    table = _fake_table()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sa, sb = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_outputs(table, a, svg_path=sa, config="x=1")
    emit_outputs(table, b, svg_path=sb, config="x=1")
    assert a.read_bytes() == b.read_bytes()
    assert sa.read_bytes() == sb.read_bytes()


def test_emit_outputs_rejects_empty_table(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs(EOCTable(rows=(), eoc_l2=(), eoc_h1=()), tmp_path / "x.csv")


def test_k2_solver_path_refines_at_higher_order():
    # short horizon keeps the explicit k=2 run affordable (the floored mass
    # makes lambda_max much larger); spatial error still dominates
    from lumpedvem.assembly import LoadAssembler
    from lumpedvem.spectral import lambda_max_power_relaxed
    from lumpedvem.timeint import integrate

    t_end = 0.02
    tab = make_tableau("ssprk3")
    errs = []
    for n in (3, 6):
        mesh = generate_mesh("distorted-quad", n, distortion=0.2, seed=5)
        packs = build_mesh_packs(mesh, 2)
        dof_map = DofMap(mesh, 2)
        system = assemble_system(mesh, 2, packs=packs, dof_map=dof_map)
        rep = lambda_max_power_relaxed(system.K_h, system.M_lumped, tol=1e-8,
                                       seed=0)
        loader = LoadAssembler(mesh, 2, packs, dof_map, system)
        u0 = interpolate_dofs(mesh, 2, CASE.u0, dof_map=dof_map)[system.free_dofs]
        final, _ = integrate(system, lambda t: loader(CASE.f, t), tab, u0,
                             0.9 * rep.dt_fe, t_end)
        errs.append(error_norms(mesh, 2, packs, expand_free(system, final.u),
                                CASE, t_end))
    # third order in L2 and second order in H1 when h halves
    assert 5.0 <= errs[0][0] / errs[1][0] <= 12.0
    assert 3.0 <= errs[0][1] / errs[1][1] <= 6.0


def test_errors_decrease_under_refinement(distorted_rk3, serendipity_rk3,
                                          voronoi_rk3):
    for table, _ in (distorted_rk3, serendipity_rk3, voronoi_rk3):
        l2 = [r.err_l2 for r in table.rows]
        h1 = [r.err_h1 for r in table.rows]
        assert all(a > b for a, b in zip(l2, l2[1:]))
        assert all(a > b for a, b in zip(h1, h1[1:]))
