"""Endemic equilibria through the kappa reduction.

At an equilibrium ``kappa = d_S S + d_I I`` is a positive constant, so for a
fixed ``kappa`` one species determines the other and a single semilinear
elliptic equation remains. The population constraint then fixes ``kappa``
through a scalar root-find. With ``Ibar = I / kappa``::

    S = (kappa / d_S) (1 - d_I Ibar),   I = kappa Ibar.

The inner unknown is the species with the smaller diffusivity: expressing
the other one through ``kappa`` then never subtracts nearly equal numbers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import eigsh

from . import limits
from .errors import NoEndemicEquilibrium, NumericalError
from .grid import apply_laplacian, integrate
from .model import Scenario
from .nonlinear import newton_from_supersolution, solve_semilinear

TRIVIAL_IBAR = 1e-10


@dataclass
class EquilibriumState:
    S: np.ndarray
    I: np.ndarray
    kappa: float
    pde_residual: float
    kappa_constancy: float
    converged: bool
    iterations: dict = field(default_factory=dict)
    d_S: float = float("nan")
    d_I: float = float("nan")
    notes: list = field(default_factory=list)

    @property
    def Ibar(self) -> np.ndarray:
        return self.I / self.kappa

    def metadata(self) -> dict:
        return {
            "kappa": self.kappa,
            "pde_residual": self.pde_residual,
            "kappa_constancy": self.kappa_constancy,
            "converged": self.converged,
            "iterations": dict(self.iterations),
            "d_S": self.d_S,
            "d_I": self.d_I,
            "notes": list(self.notes),
        }


@dataclass
class InnerSolution:
    kappa: float
    S: np.ndarray
    I: np.ndarray
    residual: float
    iterations: int
    trivial: bool
    mode: str

    @property
    def Ibar(self) -> np.ndarray:
        return self.I / self.kappa


def _pow(x, a):
    return np.power(np.maximum(x, 0.0), a)


def pde_residual(sc: Scenario, S, I) -> float:
    """Infinity norm of both steady-state equations."""
    inc = sc.beta * _pow(S, sc.q) * _pow(I, sc.p)
    rS = sc.d_S * apply_laplacian(sc.grid, S) - inc + sc.gamma * I
    rI = sc.d_I * apply_laplacian(sc.grid, I) + inc - sc.gamma * I
    return float(max(np.max(np.abs(rS)), np.max(np.abs(rI))))


def _mode(sc: Scenario) -> str:
    return "I" if sc.d_I <= sc.d_S else "S"


def local_balance(kappa, sc: Scenario) -> np.ndarray:
    """Nodewise equilibrium of the reaction alone (diffusion dropped).

    Solves ``beta S^q I^(p-1) = gamma`` with ``S = (kappa - d_I I)/d_S`` for
    ``I`` in ``(0, kappa/d_I)``; the left side decreases in ``I`` so a
    vectorised bisection suffices. Returns ``I``.
    """
    p, q, dS, dI = sc.p, sc.q, sc.d_S, sc.d_I
    Imax = kappa / dI
    lo = np.zeros(sc.grid.n)
    hi = np.full(sc.grid.n, Imax)

    def h(I):
        S = (kappa - dI * I) / dS
        return sc.beta * _pow(S, q) * _pow(np.maximum(I, 1e-300), p - 1.0) - sc.gamma

    if p == 1.0:
        active = h(lo) > 0
    else:
        active = np.ones(sc.grid.n, dtype=bool)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        pos = h(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return np.where(active, 0.5 * (lo + hi), 0.0)


def _reaction(sc: Scenario, kappa: float, mode: str):
    p, q, dS, dI, beta, gamma = sc.p, sc.q, sc.d_S, sc.d_I, sc.beta, sc.gamma
    # floors keep S^(q-1), I^(p-1) finite in the Jacobian at the bounds
    S_floor = 1e-12 * kappa / dS
    I_floor = 1e-12 * kappa / dI
    if mode == "I":
        def reaction(I):
            S = (kappa - dI * I) / dS
            Sq, Ip = _pow(S, q), _pow(I, p)
            g = beta * Sq * Ip - gamma * I
            dSq = q * _pow(np.maximum(S, S_floor), q - 1.0) if q != 1.0 else np.ones_like(S)
            dIp = p * _pow(np.maximum(I, I_floor), p - 1.0) if p != 1.0 else np.ones_like(I)
            dg = beta * (-(dI / dS) * dSq * Ip + Sq * dIp) - gamma
            return g, dg
    else:
        def reaction(S):
            I = (kappa - dS * S) / dI
            Sq, Ip = _pow(S, q), _pow(I, p)
            g = -beta * Sq * Ip + gamma * I
            dSq = q * _pow(np.maximum(S, S_floor), q - 1.0) if q != 1.0 else np.ones_like(S)
            dIp = p * _pow(np.maximum(I, I_floor), p - 1.0) if p != 1.0 else np.ones_like(I)
            dg = -beta * (dSq * Ip - (dS / dI) * Sq * dIp) - gamma * dS / dI
            return g, dg
    return reaction


def trivial_growth_rate(kappa: float, sc: Scenario) -> float:
    """Principal eigenvalue of ``d_I L + beta (kappa/d_S)^q - gamma`` (p = 1).

    It is the linearisation at ``I = 0``; the positive branch exists iff it
    is positive.
    """
    c = sc.beta * (kappa / sc.d_S) ** sc.q - sc.gamma
    return principal_eigenvalue(sc.grid.laplacian, sc.d_I, c)


def principal_eigenvalue(laplacian, diffusion, potential, vector=False):
    """Largest eigenvalue of the symmetric operator ``diffusion * L + diag(potential)``.

    With ``vector=True`` also returns the eigenvector, normalised positive
    with unit maximum.
    """
    A = (diffusion * laplacian + sp.diags(potential)).tocsc()
    n = A.shape[0]
    if n <= 400:
        vals, vecs = np.linalg.eigh(A.toarray())
        val, vec = vals[-1], vecs[:, -1]
    else:
        shift = float(np.max(potential)) + 1.0
        vals, vecs = eigsh(A, k=1, sigma=shift, which="LM")
        val, vec = vals[0], vecs[:, 0]
    if not vector:
        return float(val)
    vec = vec if vec.sum() >= 0 else -vec
    return float(val), np.maximum(vec / np.max(vec), 0.0)


def _bifurcation_guess(kappa, sc: Scenario):
    """Small positive branch ``I ~ t phi`` near the threshold (p = 1).

    ``t`` balances the growth rate against the leading nonlinear term of
    ``beta S^q`` with ``S = (kappa - d_I I)/d_S``.
    """
    S0 = kappa / sc.d_S
    c = sc.beta * S0**sc.q - sc.gamma
    lam, phi = principal_eigenvalue(sc.grid.laplacian, sc.d_I, c, vector=True)
    if lam <= 0:
        return None
    w = sc.grid.cell_weights
    damp = sc.beta * sc.q * S0 ** (sc.q - 1.0) * (sc.d_I / sc.d_S)
    t = lam * (w @ phi**2) / (w @ (damp * phi**3))
    return t * phi


def _to_unknown(I, kappa, sc, mode):
    return I if mode == "I" else (kappa - sc.d_I * I) / sc.d_S


def _inner(kappa: float, sc: Scenario, guess: InnerSolution | None = None, tol=None) -> InnerSolution:
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    mode = _mode(sc)
    tol = sc.cfg.tol_inner if tol is None else tol
    p, q, dS, dI = sc.p, sc.q, sc.d_S, sc.d_I
    # eigenvalues within round-off of zero count as the threshold itself
    if p == 1.0 and trivial_growth_rate(kappa, sc) <= 1e-12 * float(np.max(sc.gamma)):
        # no positive branch: I = 0, S = kappa / d_S
        S = np.full(sc.grid.n, kappa / dS)
        return InnerSolution(kappa, S, np.zeros(sc.grid.n), 0.0, 0, True, mode)
    Imax = kappa / dI
    I_loc = local_balance(kappa, sc)
    candidates = [I_loc]
    if guess is not None and guess.mode == mode and not guess.trivial:
        candidates.append(guess.I * (kappa / guess.kappa))
        candidates.append(np.maximum(guess.I * (kappa / guess.kappa), 0.5 * I_loc))
    if p == 1.0:
        # start strictly positive so the flow can leave the trivial branch
        candidates[0] = np.maximum(I_loc, 1e-3 * Imax * (1e-3 if dI < dS else 1.0))
        bif = _bifurcation_guess(kappa, sc)
        if bif is not None:
            candidates.append(bif)

    eps = 1e-14
    if mode == "I":
        lo = eps * Imax if p < 1 else 0.0
        hi = Imax * (1 - eps) if q < 1 else Imax
        diffusion = dI
    else:
        Smax = kappa / dS
        lo = eps * Smax if q < 1 else 0.0
        hi = Smax * (1 - eps) if p < 1 else Smax
        diffusion = dS
    reaction = _reaction(sc, kappa, mode)
    DL = diffusion * sc.grid.laplacian

    def start_residual(u):
        return float(np.max(np.abs(DL @ u + reaction(u)[0])))

    starts = [np.clip(_to_unknown(np.minimum(c, Imax), kappa, sc, mode), lo, hi) for c in candidates]
    result = None
    I_sup = float(np.max(I_loc))
    if I_sup > 0 and q <= 1.0:
        # constant supersolution: monotone Newton needs no damping
        u_sup = np.clip(_to_unknown(np.full(sc.grid.n, I_sup), kappa, sc, mode), lo, hi)
        scale = np.max(sc.gamma) * max(sc.N / sc.measure, I_sup)
        result = newton_from_supersolution(
            reaction, u_sup, sc.grid.laplacian, diffusion, tol * scale, lo, hi,
            max_iters=max(sc.cfg.max_iters, 50),
        )
        if not result.converged:
            result = None
    if result is None:
        # best start first; a stalled run moves on to the next candidate
        for u0 in sorted(starts, key=start_residual):
            I0 = u0 if mode == "I" else (kappa - dS * u0) / dI
            scale = np.max(sc.gamma) * max(sc.N / sc.measure, float(np.max(I0)))
            result = solve_semilinear(
                reaction,
                u0,
                sc.grid.laplacian,
                diffusion,
                atol=tol * scale,
                lo=lo,
                hi=hi,
                max_iters=max(sc.cfg.max_iters, 50),
                tau0=1.0 / (np.max(sc.gamma) + 1.0),
                raise_on_failure=False,
            )
            if result.converged:
                break
        else:
            raise NumericalError("inner semilinear solve did not converge from any start",
                                 kappa=kappa, residual=result.residual, starts=len(starts))
    if mode == "I":
        I = result.u
        S = (kappa - dI * I) / dS
    else:
        S = result.u
        I = (kappa - dS * S) / dI
    trivial = bool(np.max(I) / kappa < TRIVIAL_IBAR)
    return InnerSolution(kappa, S, I, result.residual, result.iterations, trivial, mode)


def solve_inner(kappa: float, sc: Scenario) -> np.ndarray:
    """Return ``Ibar`` solving the reduced equation at a fixed ``kappa``.

    For ``p = 1`` the trivial branch ``Ibar = 0`` is returned only when no
    positive solution is reached from a positive start.
    """
    return _inner(kappa, sc).Ibar


def population(sol: InnerSolution, sc: Scenario) -> float:
    return integrate(sc.grid, sol.S + sol.I)


def population_mismatch(kappa: float, sc: Scenario) -> float:
    """``N - (kappa/d_S) * integral[(1 - d_I Ibar) + d_S Ibar]``."""
    return sc.N - population(_inner(kappa, sc), sc)


def kappa_bracket(sc: Scenario) -> tuple[float, float]:
    """A-priori interval containing ``kappa`` of every endemic equilibrium."""
    density = sc.N / sc.measure
    hi = max(sc.d_S, sc.d_I) * density
    if sc.p == 1.0:
        lo = sc.d_S * sc.risk.r_min ** (1.0 / sc.q)
    else:
        lo = max(sc.d_S * limits.solve_N_star(sc), sc.d_I * limits.solve_M_star(sc))
    return lo, hi


def solve_ee(sc: Scenario, fallback: bool = False) -> EquilibriumState:
    """Endemic equilibrium with ``integral(S + I) = N``.

    Raises :class:`NoEndemicEquilibrium` when the bracket shows no positive
    branch (the expected outcome for ``p = 1`` and ``R0 <= 1``).
    """
    lo, hi = kappa_bracket(sc)
    density = sc.N / sc.measure
    if sc.p == 1.0 and density <= sc.risk.r_min ** (1.0 / sc.q):
        raise NoEndemicEquilibrium(
            f"N/|Omega| = {density:.6g} does not exceed r_min^(1/q) = {sc.risk.r_min ** (1 / sc.q):.6g}"
        )
    lo *= 1 - 1e-9
    hi *= 1 + 1e-9

    cache: dict[float, InnerSolution] = {}
    counts = {"outer": 0, "inner": 0}

    def nearest(kappa):
        if not cache:
            return None
        k = min(cache, key=lambda c: abs(np.log(c / kappa)))
        return cache[k]

    def mismatch(kappa):
        sol = _inner(kappa, sc, nearest(kappa))
        cache[kappa] = sol
        counts["outer"] += 1
        counts["inner"] += sol.iterations
        return sc.N - population(sol, sc)

    try:
        f_lo = mismatch(lo)
        f_hi = mismatch(hi)
        if f_lo < 0:
            raise NumericalError("population mismatch negative at the lower kappa bound",
                                 kappa=lo, mismatch=f_lo)
        if f_hi > 0:
            raise NoEndemicEquilibrium(f"no sign change of the population mismatch on [{lo:.6g}, {hi:.6g}]")
        kappa = brentq(
            mismatch, lo, hi, xtol=sc.cfg.tol_outer * hi, rtol=max(sc.cfg.tol_outer, 1e-15),
            maxiter=200,
        )
    except NumericalError as exc:
        if not fallback:
            raise
        from .evolve import relax_to_steady

        state = relax_to_steady(sc, sc.cfg.tol_resid, max_T=1e5)
        state.notes.append(f"kappa root-find failed ({exc}); result from time relaxation")
        return state

    sol = _inner(kappa, sc, nearest(kappa))
    if sol.trivial:
        raise NoEndemicEquilibrium("the population constraint is met only by the disease-free state")
    S, I = sol.S, sol.I
    kappa_field = sc.d_S * S + sc.d_I * I
    total = integrate(sc.grid, S + I)
    state = EquilibriumState(
        S=S,
        I=I,
        kappa=float(kappa),
        pde_residual=pde_residual(sc, S, I),
        kappa_constancy=float(np.ptp(kappa_field)),
        converged=bool(abs(total - sc.N) <= 1e-8 * sc.N),
        iterations={**counts, "final_inner": sol.iterations},
        d_S=sc.d_S,
        d_I=sc.d_I,
        notes=[f"kappa bracket [{lo:.17g}, {hi:.17g}]", f"inner unknown {sol.mode}"],
    )
    if sc.p == 1.0:
        from .spectra import compute_r0

        try:
            r0 = compute_r0(sc).value
            if r0 <= 1:
                warnings.warn(f"R0 = {r0:.6g} <= 1 but an endemic state was found", stacklevel=2)
                state.notes.append(f"R0 = {r0:.17g} <= 1")
        except NumericalError:
            pass
    return state


# ------------------------------------------------------------------ bounds


@dataclass
class BoundsReport:
    Imax_bound_ok: bool | None
    Smax_bound_ok: bool
    kappa_lower_ok: bool
    kappa_upper_ok: bool
    S_lower_ok: bool | None
    margins: dict

    @property
    def all_ok(self) -> bool:
        flags = (self.Imax_bound_ok, self.Smax_bound_ok, self.kappa_lower_ok,
                 self.kappa_upper_ok, self.S_lower_ok)
        return all(f for f in flags if f is not None)


def verify_bounds(state: EquilibriumState, sc: Scenario, slack=1e-8, s_lower_slack=1e-6) -> BoundsReport:
    """Check the maximum-principle bounds every equilibrium satisfies."""
    p, q = sc.p, sc.q
    S, I, kappa = state.S, state.I, state.kappa
    r = sc.risk.r
    density = sc.N / sc.measure
    margins = {}

    Imax_ok = None
    if p < 1:
        bound = (np.max(sc.beta / sc.gamma) * S.max() ** q) ** (1 / (1 - p))
        margins["Imax"] = bound - I.max()
        Imax_ok = I.max() <= bound * (1 + slack)

    Sbound = (sc.risk.r_max * I.max() ** (1 - p)) ** (1 / q)
    margins["Smax"] = Sbound - S.max()
    Smax_ok = S.max() <= Sbound * (1 + slack)

    if p < 1:
        n_star = limits.solve_N_star(sc)
        m_star = limits.solve_M_star(sc)
        margins["kappa_lower_dS"] = kappa / sc.d_S - n_star
        margins["kappa_lower_dI"] = kappa / sc.d_I - m_star
        lower_ok = kappa / sc.d_S >= n_star * (1 - slack) and kappa / sc.d_I >= m_star * (1 - slack)
    else:
        floor = sc.risk.r_min ** (1 / q)
        margins["kappa_lower"] = kappa / sc.d_S - floor
        lower_ok = kappa / sc.d_S >= floor * (1 - slack)

    d_max = max(sc.d_S, sc.d_I)
    margins["kappa_upper"] = density - kappa / d_max
    upper_ok = kappa / d_max <= density * (1 + slack)

    S_lower_ok = None
    if p == 1.0:
        floor = float(np.min(r)) ** (1 / q)
        margins["S_lower"] = S.min() - floor
        S_lower_ok = S.min() >= floor - s_lower_slack
    return BoundsReport(bool(Imax_ok) if Imax_ok is not None else None, bool(Smax_ok),
                        bool(lower_ok), bool(upper_ok),
                        bool(S_lower_ok) if S_lower_ok is not None else None, margins)
