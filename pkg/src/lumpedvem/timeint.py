"""Forward Euler and SSP Runge-Kutta integrators for the lumped semi-discrete
system, with per-step energy recording."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tableau",
    "StepState",
    "InstabilityError",
    "make_tableau",
    "ssp_step",
    "integrate",
    "write_energy_trace",
]

INTEGRATORS = ("fe", "ssprk3", "ssprk54")


@dataclass(frozen=True)
class Tableau:
    """Explicit Butcher tableau with SSP metadata."""

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    c_ssp: float

    @property
    def stages(self):
        return self.b.shape[0]


class InstabilityError(RuntimeError):
    """Non-finite values appeared while stepping (the CFL was exceeded)."""

    def __init__(self, step_index, t):
        self.step_index = step_index
        self.t = t
        super().__init__(
            f"non-finite solution at step {step_index} (t={t:.6g}); "
            "the time step likely violates the stability limit"
        )


# Optimal explicit SSP schemes from the strong-stability literature. The
# five-stage fourth-order coefficients are the standard 15-digit values; the
# order-condition check in make_tableau guards against transcription slips.
_SSPRK54_A = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.391752226571890, 0.0, 0.0, 0.0, 0.0],
    [0.217669096261169, 0.368410593050371, 0.0, 0.0, 0.0],
    [0.082692086657811, 0.139958502191896, 0.251891774271694, 0.0, 0.0],
    [0.067966283637115, 0.115034698504632, 0.207034898597385,
     0.544974750228521, 0.0],
]
_SSPRK54_B = [0.146811876084786, 0.248482909444976, 0.104258830331980,
              0.274438900901350, 0.226007483236906]
_SSPRK54_CSSP = 1.508180049759277


def make_tableau(kind):
    """Compiled-in tableaus: forward Euler, the optimal three-stage
    third-order SSP scheme, and the optimal five-stage fourth-order SSP
    scheme. Each tableau is validated against its order conditions on
    construction."""
    kind = kind.lower()
    if kind in ("fe", "forward-euler", "euler"):
        tab = Tableau(
            name="fe",
            A=np.zeros((1, 1)),
            b=np.array([1.0]),
            c=np.array([0.0]),
            order=1,
            c_ssp=1.0,
        )
    elif kind == "ssprk3":
        A = np.zeros((3, 3))
        A[1, 0] = 1.0
        A[2, 0] = A[2, 1] = 0.25
        tab = Tableau(
            name="ssprk3",
            A=A,
            b=np.array([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]),
            c=np.array([0.0, 1.0, 0.5]),
            order=3,
            c_ssp=1.0,
        )
    elif kind == "ssprk54":
        A = np.array(_SSPRK54_A)
        tab = Tableau(
            name="ssprk54",
            A=A,
            b=np.array(_SSPRK54_B),
            c=A.sum(axis=1),
            order=4,
            c_ssp=_SSPRK54_CSSP,
        )
    else:
        raise ValueError(f"unknown integrator {kind!r}; choose from {INTEGRATORS}")
    res = order_condition_residuals(tab)
    if max(res) > 1e-12:
        raise AssertionError(
            f"tableau {tab.name} fails order conditions (max residual {max(res):.2e})"
        )
    return tab


def order_condition_residuals(tab):
    """Residuals of the rooted-tree order conditions up to the tableau's order
    (all eight conditions through order four)."""
    A, b, c = tab.A, tab.b, tab.c
    res = [abs(b.sum() - 1.0)]
    if tab.order >= 2:
        res.append(abs(b @ c - 0.5))
    if tab.order >= 3:
        res.append(abs(b @ c**2 - 1.0 / 3.0))
        res.append(abs(b @ (A @ c) - 1.0 / 6.0))
    if tab.order >= 4:
        res.append(abs(b @ c**3 - 0.25))
        res.append(abs(b @ (c * (A @ c)) - 0.125))
        res.append(abs(b @ (A @ c**2) - 1.0 / 12.0))
        res.append(abs(b @ (A @ (A @ c)) - 1.0 / 24.0))
    # structural sanity: explicit, consistent abscissae
    res.append(float(np.abs(np.triu(A)).max()))
    res.append(float(np.abs(A.sum(axis=1) - c).max()))
    return res


@dataclass(frozen=True)
class StepState:
    """Solution snapshot; energy is the lumped norm sqrt(u^T M u)."""

    u: np.ndarray
    t: float
    step_index: int
    energy: float


def _energy(u, m_diag):
    with np.errstate(over="ignore", invalid="ignore"):
        return math.sqrt(float(u @ (m_diag * u)))


def initial_state(u0, system):
    return StepState(u=np.asarray(u0, dtype=float), t=0.0, step_index=0,
                     energy=_energy(u0, system.M_lumped))


def ssp_step(system, load, tableau, state, dt):
    """One explicit Runge-Kutta step of du/dt = M^-1 (f(t) - K u).

    ``load`` maps a stage time to the free-DOF load vector (or is None for
    the homogeneous problem). Raises InstabilityError when the result stops
    being finite.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    K, m = system.K_h, system.M_lumped
    A, b, c = tableau.A, tableau.b, tableau.c
    s = tableau.stages

    def rhs(t, u):
        g = -(K @ u)
        if load is not None:
            g = g + load(t)
        return g / m

    ks = []
    for i in range(s):
        ui = state.u
        for j in range(i):
            if A[i, j] != 0.0:
                ui = ui + (dt * A[i, j]) * ks[j]
        ks.append(rhs(state.t + c[i] * dt, ui))
    u_new = state.u.copy()
    for i in range(s):
        if b[i] != 0.0:
            u_new += (dt * b[i]) * ks[i]

    energy = _energy(u_new, m)
    if not np.all(np.isfinite(u_new)) or not math.isfinite(energy):
        raise InstabilityError(state.step_index + 1, state.t + dt)
    return StepState(
        u=u_new,
        t=state.t + dt,
        step_index=state.step_index + 1,
        energy=energy,
    )


def integrate(system, load, tableau, u0, dt, t_end, record_energy=False):
    """March from t=0 to t_end; the final step is truncated to land exactly
    on t_end. Returns (final state, energy trace). The trace holds
    (step, t, energy) rows, starting with the initial state, and is empty
    when recording is off."""
    if dt <= 0.0 or t_end <= 0.0:
        raise ValueError("dt and t_end must be positive")
    state = initial_state(u0, system)
    trace = [(0, 0.0, state.energy)] if record_energy else []
    n_steps = math.ceil(t_end / dt - 1e-12)
    for step in range(n_steps):
        step_dt = min(dt, t_end - state.t)
        if step_dt <= 0.0:
            break
        state = ssp_step(system, load, tableau, state, step_dt)
        if record_energy:
            trace.append((state.step_index, state.t, state.energy))
    return state, trace


def write_energy_trace(path, trace, config=None):
    """Energy trace CSV with columns step, t, energy."""
    with open(path, "w") as fh:
        if config:
            fh.write(f"# config: {config}\n")
        fh.write("step,t,energy\n")
        for step, t, energy in trace:
            fh.write(f"{step},{t:.17g},{energy:.17g}\n")
