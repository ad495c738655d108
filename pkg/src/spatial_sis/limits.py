"""Algebraic limit equations and the limit profiles they define.

Every integral uses the grid quadrature, so a limit prediction and a PDE
solve on the same grid share their discretisation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, RegimeError
from .grid import integrate
from .model import Scenario

UPPER_CAP = 1e9


def bisect_increasing(fn, target, lo=0.0, hi=None, max_iter=400):
    """Solve ``fn(x) = target`` for a continuous increasing ``fn``.

    The upper end grows geometrically until it brackets the target (capped
    at ``UPPER_CAP``). Bisection then runs until the bracket stops
    shrinking in floating point.
    """
    if hi is None:
        hi = max(1.0, 2 * lo)
    while fn(hi) < target:
        lo, hi = hi, 2 * hi
        if hi > UPPER_CAP:
            raise NumericalError("bisection bracket exceeded cap", cap=UPPER_CAP, target=target)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    f_lo, f_hi = fn(lo) - target, fn(hi) - target
    return lo if abs(f_lo) <= abs(f_hi) else hi


def _require_sublinear(sc: Scenario):
    if not 0 < sc.p < 1:
        raise RegimeError(f"requires 0 < p < 1, got p = {sc.p}")


def _require_linear(sc: Scenario):
    if sc.p != 1.0:
        raise RegimeError(f"requires p = 1, got p = {sc.p}")


# ------------------------------------------------------------ 0 < p < 1


def S_star_map(sc: Scenario, s: float) -> float:
    k = 1.0 / (1.0 - sc.p)
    with np.errstate(over="ignore"):  # inf is a valid "too large" answer for bisection
        return integrate(sc.grid, s + (s**sc.q / sc.risk.r) ** k)


def solve_S_star(sc: Scenario) -> float:
    """Constant ``S_*`` with ``N = integral[S_* + (S_*^q / r)^(1/(1-p))]``."""
    _require_sublinear(sc)
    return bisect_increasing(lambda s: S_star_map(sc, s), sc.N, 0.0, sc.N / sc.measure)


def I_star_map(sc: Scenario, s: float) -> float:
    return integrate(sc.grid, (sc.risk.r * s ** (1.0 - sc.p)) ** (1.0 / sc.q) + s)


def solve_I_star(sc: Scenario) -> float:
    """Constant ``I_*`` with ``N = integral[(r I_*^(1-p))^(1/q) + I_*]``."""
    _require_sublinear(sc)
    return bisect_increasing(lambda s: I_star_map(sc, s), sc.N, 0.0, sc.N / sc.measure)


def solve_N_star(sc: Scenario) -> float:
    """Lower bound of ``kappa/d_S``: ``N/|Omega| = s + (beta/gamma)_max^(1/(1-p)) s^(q/(1-p))``."""
    _require_sublinear(sc)
    b = float(np.max(sc.beta / sc.gamma)) ** (1.0 / (1.0 - sc.p))
    e = sc.q / (1.0 - sc.p)
    density = sc.N / sc.measure
    return bisect_increasing(lambda s: s + b * s**e, density, 0.0, density)


def solve_M_star(sc: Scenario) -> float:
    """Lower bound of ``kappa/d_I``: ``N/|Omega| = s + r_max^(1/q) s^((1-p)/q)``."""
    _require_sublinear(sc)
    b = sc.risk.r_max ** (1.0 / sc.q)
    e = (1.0 - sc.p) / sc.q
    density = sc.N / sc.measure
    return bisect_increasing(lambda s: s + b * s**e, density, 0.0, density)


def solve_I_sigma_pointwise(kappa_t, sigma: float, sc: Scenario, r=None) -> np.ndarray:
    """Nodewise ``I >= 0`` with ``kappa_t = sigma I + r^(1/q) I^((1-p)/q)``.

    ``kappa_t`` may be a scalar or a per-node array. ``r`` defaults to the
    scenario's risk function; pass a slice to evaluate single nodes.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = sc.risk.r if r is None else np.asarray(r, dtype=float)
    kappa_t = np.broadcast_to(np.asarray(kappa_t, dtype=float), r.shape)
    if np.any(kappa_t < 0):
        raise ValueError("kappa must be non-negative")
    rr = r ** (1.0 / sc.q)
    e = (1.0 - sc.p) / sc.q
    lo = np.zeros_like(rr)
    hi = kappa_t / sigma
    for _ in range(1100):
        mid = 0.5 * (lo + hi)
        if not np.any((mid > lo) & (mid < hi)):
            break
        below = sigma * mid + rr * mid**e < kappa_t
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    resid_lo = np.abs(sigma * lo + rr * lo**e - kappa_t)
    resid_hi = np.abs(sigma * hi + rr * hi**e - kappa_t)
    return np.where(resid_lo <= resid_hi, lo, hi)


def G_sigma(sc: Scenario, kappa_t: float, sigma: float) -> float:
    I = solve_I_sigma_pointwise(kappa_t, sigma, sc)
    e = (1.0 - sc.p) / sc.q
    return integrate(sc.grid, sc.risk.r ** (1.0 / sc.q) * I**e + I)


def solve_kappa_sigma_plt1(sc: Scenario, sigma: float):
    """``(kappa_sigma, I_limit, S_limit)`` of the joint limit for ``0 < p < 1``."""
    _require_sublinear(sc)
    kappa = bisect_increasing(lambda k: G_sigma(sc, k, sigma), sc.N, 0.0, sc.N / sc.measure)
    I = solve_I_sigma_pointwise(kappa, sigma, sc)
    S = sc.risk.r ** (1.0 / sc.q) * I ** ((1.0 - sc.p) / sc.q)
    return kappa, I, S


def lu2_residual(sc: Scenario, kappa: float, sigma: float) -> float:
    """Residual of ``N = kappa |Omega| + (1 - sigma) integral I_sigma``."""
    I = solve_I_sigma_pointwise(kappa, sigma, sc)
    return sc.N - (kappa * sc.measure + (1.0 - sigma) * integrate(sc.grid, I))


# ----------------------------------------------------------------- p = 1


def kappa_sigma_map(sc: Scenario, kappa: float, sigma: float) -> float:
    rr = sc.r_root
    return integrate(sc.grid, np.minimum(kappa, rr) + np.maximum(kappa - rr, 0.0) / sigma)


def solve_kappa_sigma_p1(sc: Scenario, sigma: float):
    """``(kappa_sigma, S_sigma, I_sigma)`` of the joint limit for ``p = 1``."""
    _require_linear(sc)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kappa = bisect_increasing(lambda k: kappa_sigma_map(sc, k, sigma), sc.N, 0.0, sc.N / sc.measure)
    rr = sc.r_root
    return kappa, np.minimum(kappa, rr), np.maximum(kappa - rr, 0.0) / sigma


def kappa_sigma_closed_form(sc: Scenario, sigma: float) -> float:
    """Large-sigma closed form, valid once ``kappa_sigma >= r_max^(1/q)``."""
    total_r = integrate(sc.grid, sc.r_root)
    return sigma / sc.measure * (sc.N - total_r) + total_r / sc.measure


def sigma_star(sc: Scenario) -> float:
    """Smallest sigma from which the closed form holds (needs N > int r^(1/q)).

    The closed form is exact iff it reaches ``r_max^(1/q)``; that gives
    ``sigma* = |Omega| (r_max^(1/q) - mean r^(1/q)) / (N - int r^(1/q))``.
    """
    _require_linear(sc)
    total_r = integrate(sc.grid, sc.r_root)
    excess = sc.N - total_r
    if excess <= 0:
        raise RegimeError("sigma* exists only when N > integral r^(1/q)")
    return sc.measure * (sc.risk.r_max ** (1 / sc.q) - total_r / sc.measure) / excess


def solve_kappa_infty(sc: Scenario) -> float:
    """``kappa_infty`` with ``N = integral min(kappa, r^(1/q))`` (needs N < int r^(1/q))."""
    _require_linear(sc)
    rr = sc.r_root
    if not sc.N < integrate(sc.grid, rr):
        raise RegimeError("kappa_infty exists only when N < integral r^(1/q)")
    if not sc.N / sc.measure > rr.min():
        raise RegimeError("kappa_infty needs N/|Omega| > r_min^(1/q)")
    return bisect_increasing(lambda k: integrate(sc.grid, np.minimum(k, rr)), sc.N, 0.0, rr.max())


@dataclass
class SigmaAsymptotics:
    regime: str
    excess: float
    kappa_infty: float | None
    sigma_star: float | None
    closed_form_limit_I: float | None
    small_sigma: dict = field(default_factory=dict)


def kappa_sigma_asymptotics(sc: Scenario, small_sigma=1e-6, risk_mask=None) -> SigmaAsymptotics:
    """Large- and small-sigma behaviour of ``kappa_sigma`` for ``p = 1``.

    ``small_sigma`` diagnostics compare ``kappa_sigma`` with
    ``r_min^(1/q)``, ``integral I_sigma`` with ``N - |Omega| r_min^(1/q)``
    and, on a risk set of positive measure, ``I_sigma`` with the constant
    ``(N - |Omega| r_min^(1/q)) / |Omega_*|``.
    """
    _require_linear(sc)
    total_r = integrate(sc.grid, sc.r_root)
    excess = sc.N - total_r
    if excess < 0:
        regime = "below"
    elif excess == 0:
        regime = "critical"
    else:
        regime = "above"
    k_inf = solve_kappa_infty(sc) if regime == "below" else None
    s_star = sigma_star(sc) if regime == "above" else None
    c_lim = excess / sc.measure if regime == "above" else None

    r_floor = sc.risk.r_min ** (1 / sc.q)
    kappa, S_sig, I_sig = solve_kappa_sigma_p1(sc, small_sigma)
    mass_target = sc.N - sc.measure * r_floor
    diag = {
        "sigma": small_sigma,
        "kappa_minus_rmin": kappa - r_floor,
        "mass_I": integrate(sc.grid, I_sig),
        "mass_target": mass_target,
        "S_minus_rmin_inf": float(np.max(np.abs(S_sig - r_floor))),
    }
    mask = sc.risk.risk_set_mask if risk_mask is None else risk_mask
    measure_star = float(np.sum(sc.grid.cell_weights[mask]))
    if measure_star > 0 and mask.any():
        plateau = mass_target / measure_star
        diag["plateau"] = plateau
        diag["plateau_error_inf"] = float(np.max(np.abs(I_sig[mask] - plateau)))
    return SigmaAsymptotics(regime, excess, k_inf, s_star, c_lim, diag)


# ----------------------------------------------------- profile containers


@dataclass
class LimitProfile:
    kind: str
    S_limit: np.ndarray
    I_limit: np.ndarray
    sigma: float | None = None
    scalars: dict = field(default_factory=dict)


def profile_dI_to_0(sc: Scenario) -> LimitProfile:
    """Limit as ``d_I -> 0``: constant ``r_min^(1/q)`` (p=1) or ``S_*`` (p<1).

    For ``p = 1`` the infected limit is a measure; ``I_limit`` is left at
    zero and mass statements use ``N - |Omega| r_min^(1/q)``.
    """
    if sc.p == 1.0:
        floor = sc.risk.r_min ** (1 / sc.q)
        return LimitProfile(
            "dI_to_0_p1",
            np.full(sc.grid.n, floor),
            np.zeros(sc.grid.n),
            scalars={"mass_I": sc.N - sc.measure * floor},
        )
    s = solve_S_star(sc)
    I = (s**sc.q / sc.risk.r) ** (1 / (1 - sc.p))
    return LimitProfile("dI_to_0_plt1", np.full(sc.grid.n, s), I, scalars={"S_star": s})


def profile_dS_to_0(sc: Scenario, nonlocal_solution=None) -> LimitProfile:
    rr = sc.r_root
    if sc.p < 1:
        i_star = solve_I_star(sc)
        return LimitProfile(
            "dS_to_0_plt1", rr * i_star ** ((1 - sc.p) / sc.q), np.full(sc.grid.n, i_star),
            scalars={"I_star": i_star},
        )
    excess = sc.N - integrate(sc.grid, rr)
    if excess > 0:
        return LimitProfile(
            "dS_to_0_p1_large", rr.copy(), np.full(sc.grid.n, excess / sc.measure),
            scalars={"I_constant": excess / sc.measure},
        )
    sol = solve_nonlocal_Istar(sc) if nonlocal_solution is None else nonlocal_solution
    return LimitProfile(
        "dS_to_0_p1_small", sol.S_star, np.zeros(sc.grid.n),
        scalars={"m": sol.m, "C_star": sc.N / sol.m},
    )


def profile_joint(sc: Scenario, sigma: float) -> LimitProfile:
    if sc.p == 1.0:
        kappa, S, I = solve_kappa_sigma_p1(sc, sigma)
        return LimitProfile("joint_p1", S, I, sigma, {"kappa_tilde_sigma": kappa})
    kappa, I, S = solve_kappa_sigma_plt1(sc, sigma)
    return LimitProfile("joint_plt1", S, I, sigma, {"kappa_tilde_sigma": kappa})


# ------------------------------------------------- nonlocal limit problem


@dataclass
class NonlocalSolution:
    I_star: np.ndarray
    S_star: np.ndarray
    m: float
    residual: float
    iterations: int


def _nonlocal_inner(sc: Scenario, m: float, guess):
    from .nonlinear import NewtonResult, newton_from_supersolution, solve_semilinear

    dI, q, N = sc.d_I, sc.q, sc.N
    beta, gamma = sc.beta, sc.gamma
    c = N**q / m**q
    Imax = 1.0 / dI

    def reaction(u):
        w = np.maximum(1.0 - dI * u, 0.0)
        wq = w**q
        g = beta * c * wq * u - gamma * u
        dwq = q * np.power(np.maximum(w, 1e-300), q - 1.0) if q != 1.0 else np.ones_like(w)
        dg = beta * c * (wq - dI * dwq * u) - gamma
        return g, dg

    hi = Imax * (1 - 1e-14) if q < 1 else Imax
    atol = sc.cfg.tol_inner * max(np.max(beta) * c, np.max(gamma)) * Imax
    # nodewise balance beta c (1 - d_I u)^q = gamma; its maximum is a supersolution
    balance = (1.0 - (gamma / (beta * c)) ** (1.0 / q)) / dI
    u_sup = float(np.max(balance))
    if u_sup <= 0:
        return NewtonResult(np.zeros(sc.grid.n), 0.0, 0, True)
    if q <= 1:
        res = newton_from_supersolution(reaction, np.full(sc.grid.n, min(u_sup, hi)), sc.grid.laplacian,
                                        dI, atol, lo=0.0, hi=hi, max_iters=max(sc.cfg.max_iters, 50))
        if res.converged:
            return res
    u0 = np.clip(guess, 1e-3 * Imax, hi)
    return solve_semilinear(
        reaction, u0, sc.grid.laplacian, dI, atol=atol,
        lo=0.0, hi=hi, max_iters=max(sc.cfg.max_iters, 50),
    )


def solve_nonlocal_Istar(sc: Scenario, max_sweeps=200) -> NonlocalSolution:
    """Positive ``I*`` of the nonlocal problem with ``m = ||1 - d_I I*||_1``.

    The scalar ``m`` is found by a safeguarded secant iteration on
    ``m - integral(1 - d_I I*(m))``; each evaluation is a semilinear
    solve at frozen ``m``. Raises :class:`RegimeError` when only ``I* = 0``
    is found (e.g. ``N/|Omega| >= r_max^(1/q)``).
    """
    _require_linear(sc)
    from scipy.optimize import brentq

    dI = sc.d_I
    measure = sc.measure
    if sc.N / measure >= sc.risk.r_max ** (1.0 / sc.q):
        raise RegimeError("no positive solution when N/|Omega| >= r_max^(1/q)")
    cache = {}
    guess = [np.full(sc.grid.n, 0.5 / dI)]

    def gap(m):
        res = _nonlocal_inner(sc, m, guess[0])
        if np.max(res.u) * dI > TRIVIAL:
            guess[0] = res.u
        cache[m] = res
        return m - integrate(sc.grid, 1.0 - dI * res.u)

    # m ranges over (0, |Omega|]; I* = 0 gives gap(|Omega|) = 0 (trivial root)
    hi = measure * (1 - 1e-9)
    lo = measure * 1e-6
    g_hi = gap(hi)
    if np.max(cache[hi].u) * dI <= TRIVIAL:
        raise RegimeError("nonlocal problem has no positive solution (only I* = 0 found)")
    g_lo = gap(lo)
    if not (g_lo < 0 < g_hi):
        raise NumericalError("nonlocal mass gap does not change sign", g_lo=g_lo, g_hi=g_hi)
    m = brentq(gap, lo, hi, xtol=1e-14 * measure, rtol=1e-15, maxiter=max_sweeps)
    res = _nonlocal_inner(sc, m, cache[min(cache, key=lambda k: abs(k - m))].u)
    I_star = res.u
    if np.max(I_star) * dI <= TRIVIAL:
        raise RegimeError("nonlocal problem has no positive solution (only I* = 0 found)")
    w = 1.0 - dI * I_star
    S_star = sc.N * w / integrate(sc.grid, w)
    return NonlocalSolution(I_star, S_star, float(m), res.residual, res.iterations)


TRIVIAL = 1e-10
