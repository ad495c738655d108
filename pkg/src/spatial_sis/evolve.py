"""Time integration of the parabolic system.

The IMEX step treats diffusion implicitly and the exchange term
``R = beta S^q I^p - gamma I`` explicitly, evaluated once and moved from S to
I. Because the Laplacian has zero column sums (symmetric with zero row
sums on uniform weights), each implicit diffusion solve preserves the
integral, so ``integral(S + I)`` is conserved up to round-off.

``relax_to_steady`` can switch to linearly implicit Euler steps on the
coupled system once the IMEX phase has settled; those steps conserve mass
for the same reason and allow time steps far beyond the diffusive scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .config import ScenarioConfig
from .errors import NumericalError
from .grid import integrate
from .model import Scenario

EPS_FLOOR = 1e-14


@dataclass
class EvolutionState:
    S: np.ndarray
    I: np.ndarray
    t: float
    N_target: float
    clipped_mass: float = 0.0
    steps: int = 0

    def mass(self, grid) -> float:
        return integrate(grid, self.S + self.I)


def _scenario(obj) -> Scenario:
    return obj if isinstance(obj, Scenario) else Scenario.from_config(obj)


def _ipow(I, p):
    if p == 1.0:
        return I
    return np.exp(p * np.log(np.maximum(I, EPS_FLOOR)))


def _spow(S, q):
    if q == 1.0:
        return np.maximum(S, 0.0)
    return np.power(np.maximum(S, 0.0), q)


def exchange(sc: Scenario, S, I) -> np.ndarray:
    """``beta S^q I^p - gamma I``: flux from S into I."""
    return sc.beta * _spow(S, sc.q) * _ipow(I, sc.p) - sc.gamma * I


def time_derivative(sc: Scenario, S, I):
    R = exchange(sc, S, I)
    L = sc.grid.laplacian
    return sc.d_S * (L @ S) - R, sc.d_I * (L @ I) + R


def steady_residual(sc: Scenario, S, I) -> float:
    """``||dS/dt||_inf + ||dI/dt||_inf``."""
    dS, dI = time_derivative(sc, S, I)
    return float(np.max(np.abs(dS)) + np.max(np.abs(dI)))


def default_dt(sc: Scenario, S, I, dt_max=1.0) -> float:
    """Largest ``dt`` with ``dt * (reaction rate) <= 0.5``."""
    Sf = np.maximum(S, 1e-8)
    If = np.maximum(I, 1e-8)
    rate_I = sc.beta * _spow(Sf, sc.q) * If ** (sc.p - 1.0) + sc.gamma
    rate_S = sc.beta * sc.q * Sf ** (sc.q - 1.0) * _ipow(If, sc.p)
    rate = float(np.max(np.maximum(rate_I, rate_S)))
    return float(min(dt_max, 0.5 / rate))


class IMEXStepper:
    """Holds the factorised implicit diffusion operators for each ``dt`` used."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self._lu = {}

    def _solvers(self, dt):
        if dt not in self._lu:
            L = self.sc.grid.laplacian
            eye = sp.identity(self.sc.grid.n, format="csc")
            try:
                self._lu[dt] = (
                    splu((eye - dt * self.sc.d_S * L).tocsc()),
                    splu((eye - dt * self.sc.d_I * L).tocsc()),
                )
            except RuntimeError as exc:
                raise NumericalError("diffusion matrix factorisation failed", dt=dt) from exc
            if len(self._lu) > 8:
                self._lu.pop(next(iter(self._lu)))
        return self._lu[dt]

    def raw_step(self, S, I, dt):
        lu_S, lu_I = self._solvers(dt)
        R = exchange(self.sc, S, I)
        S_new = lu_S.solve(S - dt * R)
        I_new = lu_I.solve(I + dt * R)
        if not (np.all(np.isfinite(S_new)) and np.all(np.isfinite(I_new))):
            raise NumericalError("non-finite values in IMEX step", dt=dt)
        return S_new, I_new

    def _advance(self, S, I, dt, depth):
        S_new, I_new = self.raw_step(S, I, dt)
        if S_new.min() >= 0 and I_new.min() >= 0:
            return S_new, I_new, 0.0
        if depth > 0:
            S_half, I_half, c1 = self._advance(S, I, 0.5 * dt, depth - 1)
            S_new, I_new, c2 = self._advance(S_half, I_half, 0.5 * dt, depth - 1)
            return S_new, I_new, c1 + c2
        w = self.sc.grid.cell_weights
        clipped = float(w @ (np.maximum(-S_new, 0.0) + np.maximum(-I_new, 0.0)))
        return np.maximum(S_new, 0.0), np.maximum(I_new, 0.0), clipped

    def step(self, state: EvolutionState, dt: float, max_halvings: int = 12) -> EvolutionState:
        """Advance by exactly ``dt``.

        An undershoot below zero is retried as two half steps, recursively;
        clipping (with the removed mass recorded) happens only past
        ``max_halvings`` levels.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        S, I, clipped = self._advance(state.S, state.I, dt, max_halvings)
        return EvolutionState(S, I, state.t + dt, state.N_target,
                              state.clipped_mass + clipped, state.steps + 1)

    def safe_step(self, state: EvolutionState, dt: float, min_dt=1e-12):
        """Step, halving ``dt`` while the result would go negative.

        Returns ``(new_state, dt_used)``. Clipping is the last resort.
        """
        while dt > min_dt:
            S, I = self.raw_step(state.S, state.I, dt)
            if S.min() >= 0 and I.min() >= 0:
                return EvolutionState(S, I, state.t + dt, state.N_target,
                                      state.clipped_mass, state.steps + 1), dt
            dt *= 0.5
        return self.step(state, dt, max_halvings=0), dt


def initial_state(sc: Scenario) -> EvolutionState:
    return EvolutionState(sc.S0.copy(), sc.I0.copy(), 0.0, sc.N)


def step_imex(state: EvolutionState, cfg, dt: float) -> EvolutionState:
    """One IMEX step; undershoots are sub-stepped, clipped only as a last resort."""
    return IMEXStepper(_scenario(cfg)).step(state, dt)


def run_to_time(cfg, T: float, dt: float | None = None, snapshot_times=(), state=None):
    """Integrate to ``T``; returns states at each snapshot time and at ``T``.

    With ``dt=None`` the step follows the reaction-rate heuristic and is
    re-evaluated every 50 steps. Snapshot times are hit exactly.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    sc = _scenario(cfg)
    stepper = IMEXStepper(sc)
    state = initial_state(sc) if state is None else state
    targets = sorted({float(t) for t in snapshot_times if 0 < t < T} | {float(T)})
    out = []
    if 0.0 in {float(t) for t in snapshot_times}:
        out.append(state)
    fixed = dt is not None
    h = dt if fixed else default_dt(sc, state.S, state.I)
    for target in targets:
        while state.t < target * (1 - 1e-14):
            step = min(h, target - state.t)
            state, used = stepper.safe_step(state, step)
            if used < step:
                h = used
            elif not fixed and state.steps % 50 == 0:
                h = default_dt(sc, state.S, state.I)
        state.t = target
        out.append(state)
    return out


# ------------------------------------------------------ steady states


def _coupled_jacobian(sc: Scenario, S, I):
    q, p = sc.q, sc.p
    Sf = np.maximum(S, EPS_FLOOR)
    If = np.maximum(I, EPS_FLOOR)
    R_S = sc.beta * q * Sf ** (q - 1.0) * _ipow(I, p) if q != 1.0 else sc.beta * _ipow(I, p)
    R_I = (sc.beta * _spow(S, q) * p * If ** (p - 1.0) if p != 1.0 else sc.beta * _spow(S, q)) - sc.gamma
    L = sc.grid.laplacian
    return sp.bmat(
        [
            [sc.d_S * L - sp.diags(R_S), -sp.diags(R_I)],
            [sp.diags(R_S), sc.d_I * L + sp.diags(R_I)],
        ],
        format="csc",
    )


def _implicit_relax(sc, S, I, tol, dt, max_T, t0, max_steps=2000):
    """Linearly implicit Euler with step growth driven by the residual."""
    n = sc.grid.n
    t = t0
    res = steady_residual(sc, S, I)
    steps = 0
    eye = sp.identity(2 * n, format="csc")
    while res > tol and t < max_T and steps < max_steps:
        steps += 1
        dS, dI = time_derivative(sc, S, I)
        F = np.concatenate([dS, dI])
        J = _coupled_jacobian(sc, S, I)
        try:
            dU = splu((eye / dt - J).tocsc()).solve(F)
        except RuntimeError:
            dt *= 0.25
            continue
        S_new, I_new = S + dU[:n], I + dU[n:]
        floor_S = 0.0 if sc.q >= 1 else EPS_FLOOR
        ok = np.all(np.isfinite(dU)) and S_new.min() >= floor_S and I_new.min() >= 0
        if ok:
            res_new = steady_residual(sc, S_new, I_new)
            ok = res_new < 10 * res
        if not ok:
            dt *= 0.25
            if dt < 1e-10:
                break
            continue
        S, I, t = S_new, I_new, t + dt
        dt = min(dt * min(max(res / max(res_new, 1e-300), 0.5), 10.0), 1e12)
        res = res_new
    return S, I, t, res, steps


def relax_to_steady(cfg, tol_resid: float, max_T: float = 1e5, dt=None,
                    implicit: bool = True, imex_T: float = 50.0):
    """Integrate until ``||S_t||_inf + ||I_t||_inf <= tol_resid``.

    An IMEX phase runs to ``imex_T`` (or convergence). When ``implicit`` is
    set, linearly implicit Euler steps with growing ``dt`` continue from
    there. Reaching ``max_T`` first returns the last state with
    ``converged = False``.
    """
    from .equilibrium import EquilibriumState, pde_residual

    if not tol_resid > 0:
        raise ValueError("tol_resid must be positive")
    sc = _scenario(cfg)
    stepper = IMEXStepper(sc)
    state = initial_state(sc)
    h = default_dt(sc, state.S, state.I) if dt is None else dt
    res = steady_residual(sc, state.S, state.I)
    phase_end = min(imex_T, max_T) if implicit else max_T
    steps = 0
    while res > tol_resid and state.t < phase_end:
        state, used = stepper.safe_step(state, min(h, phase_end - state.t))
        h = min(h, used) if dt is not None else h
        steps += 1
        if steps % 20 == 0:
            res = steady_residual(sc, state.S, state.I)
            if dt is None:
                h = default_dt(sc, state.S, state.I)
    res = steady_residual(sc, state.S, state.I)
    S, I, t = state.S, state.I, state.t
    implicit_steps = 0
    if implicit and res > tol_resid and t < max_T:
        S, I, t, res, implicit_steps = _implicit_relax(sc, S, I, tol_resid, max(h, 1.0), max_T, t)
    kappa_field = sc.d_S * S + sc.d_I * I
    return EquilibriumState(
        S=S,
        I=I,
        kappa=integrate(sc.grid, kappa_field) / sc.measure,
        pde_residual=pde_residual(sc, S, I),
        kappa_constancy=float(np.ptp(kappa_field)),
        converged=bool(res <= tol_resid),
        iterations={"imex_steps": steps, "implicit_steps": implicit_steps},
        d_S=sc.d_S,
        d_I=sc.d_I,
        notes=[f"time relaxation to t = {t:.6g}, residual {res:.3e}"],
    )
