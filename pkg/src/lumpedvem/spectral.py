"""Largest generalized eigenvalue of the lumped system, explicit time-step
limits, and the h^2 scaling check of the spectral bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralReport",
    "PowerIterationError",
    "lambda_max_power",
    "lambda_max_power_relaxed",
    "dt_limits",
    "verify_spectral_bound",
]


@dataclass(frozen=True)
class SpectralReport:
    lambda_max: float
    iterations: int
    residual: float          # ||K v - lambda M v||_{M^-1} / ||v||_M at exit
    dt_fe: float             # forward-Euler limit 2 / lambda_max
    h_min: float = math.nan  # filled when a mesh is attached
    bound_product: float = math.nan  # lambda_max * h_min^2
    n_free: int = 0
    history: np.ndarray = field(default=None, repr=False)  # Rayleigh quotients


class PowerIterationError(RuntimeError):
    """Power iteration hit the iteration cap; carries the last report."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"power iteration did not converge in {report.iterations} iterations "
            f"(last lambda {report.lambda_max:.6e}); consider loosening tol"
        )


def lambda_max_power(K, M_diag, tol=1e-10, max_iters=None, seed=0):
    """Largest eigenvalue of M^-1 K by power iteration in the M inner product.

    K must be symmetric positive semi-definite and M diagonal positive, so
    Rayleigh quotients increase toward lambda_max. The start vector is
    seeded and strictly positive; convergence requires the relative change
    of the Rayleigh quotient to stay below ``tol`` on two consecutive
    iterations, which guards against a slowly-decaying plateau.
    """
    M_diag = np.asarray(M_diag, dtype=float)
    n = M_diag.shape[0]
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iters is None:
        max_iters = int(50 * math.sqrt(n)) + 1000

    rng = np.random.default_rng(seed)
    v = 1.0 + rng.uniform(0.0, 1.0, size=n)  # all-positive start
    v /= math.sqrt(float(v @ (M_diag * v)))

    lam_prev = None
    hits = 0
    history = []
    for it in range(1, max_iters + 1):
        w = (K @ v) / M_diag
        kv = float(v @ (M_diag * w))          # = v^T K v
        lam = kv                              # v is M-normalized
        history.append(lam)
        norm = math.sqrt(float(w @ (M_diag * w)))
        if norm == 0.0:
            # K v = 0: the iterate sits in the kernel; lambda_max is 0 only
            # if K itself is zero, which a Dirichlet-eliminated system is not
            lam = 0.0
            break
        v = w / norm
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            hits += 1
            if hits >= 2:
                lam_prev = lam
                break
        else:
            hits = 0
        lam_prev = lam

    resid_vec = (K @ v) - lam * (M_diag * v)
    residual = math.sqrt(float(resid_vec @ (resid_vec / M_diag)))
    report = SpectralReport(
        lambda_max=lam,
        iterations=it,
        residual=residual,
        dt_fe=2.0 / lam if lam > 0 else math.inf,
        n_free=n,
        history=np.array(history),
    )
    if it >= max_iters and hits < 2:
        raise PowerIterationError(report)
    return report


def lambda_max_power_relaxed(K, M_diag, tol, max_iters=None, seed=0,
                             tol_ceiling=1e-6):
    """Power iteration with an automatic tolerance ladder.

    A nearly-degenerate top eigenvalue can stall the Rayleigh-quotient
    change below very tight tolerances; callers that only need a few
    correct digits (time-step selection, scaling sweeps) retry at 100x
    looser tolerance up to ``tol_ceiling`` before giving up.
    """
    current = tol
    while True:
        try:
            return lambda_max_power(K, M_diag, tol=current, max_iters=max_iters,
                                    seed=seed)
        except PowerIterationError:
            if current >= tol_ceiling:
                raise
            current = min(current * 100.0, tol_ceiling)


def dt_limits(report, tableau, safety):
    """Time step safety * C_ssp * dt_FE for the given integrator.

    ``safety`` above one deliberately crosses the stability boundary, which
    the CLI uses for instability experiments.
    """
    if safety <= 0.0:
        raise ValueError("safety must be positive")
    return safety * tableau.c_ssp * report.dt_fe


def verify_spectral_bound(meshes, k, delta=0.1, tol=1e-10, seed=0):
    """lambda_max * h_min^2 per refinement level; flags a level when the
    product jumps by more than a factor two from its predecessor.

    Returns (reports, flags). Needs at least three levels of one family for
    the scaling statement to mean anything.
    """
    from .assembly import assemble_system
    from .mesh import mesh_stats

    if len(meshes) < 3:
        raise ValueError("need at least 3 refinement levels")
    reports = []
    flags = []
    prev = None
    for mesh in meshes:
        system = assemble_system(mesh, k, delta=delta)
        base = lambda_max_power_relaxed(system.K_h, system.M_lumped, tol=tol,
                                        seed=seed)
        h_min = mesh_stats(mesh).h_min
        product = base.lambda_max * h_min**2
        reports.append(
            SpectralReport(
                lambda_max=base.lambda_max,
                iterations=base.iterations,
                residual=base.residual,
                dt_fe=base.dt_fe,
                h_min=h_min,
                bound_product=product,
                n_free=system.n_free,
                history=base.history,
            )
        )
        flags.append(prev is not None and not (0.5 <= product / prev <= 2.0))
        prev = product
    return reports, flags
