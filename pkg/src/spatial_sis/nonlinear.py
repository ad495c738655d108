"""Damped Newton with pseudo-transient continuation for semilinear problems

    F(u) = D * (L @ u) + g(u) = 0,      lo <= u <= hi,

where ``g`` acts nodewise. Each step solves ``(I/tau - J) du = F``; ``tau``
grows with the residual ratio (switched evolution relaxation), so the
iteration follows the flow ``u_t = F(u)`` early on and turns into plain
Newton near a stable root. Following the flow is what keeps the positive
branch from collapsing onto ``u = 0`` for logistic-type problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import NumericalError


@dataclass
class NewtonResult:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _norm(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def solve_semilinear(
    reaction,
    u0,
    laplacian,
    diffusion,
    atol,
    lo=None,
    hi=None,
    max_iters=200,
    tau0=1.0,
    tau_max=1e14,
    max_backtracks=30,
    raise_on_failure=True,
):
    """Find a root of ``diffusion * L u + g(u)``.

    ``reaction(u)`` returns ``(g, dg)`` with ``dg`` the nodewise derivative.
    Iterates are projected onto ``[lo, hi]`` (arrays or scalars).
    """
    u = np.array(u0, dtype=float)
    n = u.size
    L = laplacian
    eye = sp.identity(n, format="csr")
    DL = (diffusion * L).tocsr()

    def project(v):
        if lo is not None or hi is not None:
            v = np.clip(v, lo, hi)
        return v

    u = project(u)

    def evaluate(v):
        g, dg = reaction(v)
        return DL @ v + g, dg

    F, dg = evaluate(u)
    res = _norm(F)
    tau = tau0
    it = 0
    while it < max_iters:
        if np.isfinite(res) and res <= atol:
            return NewtonResult(u, res, it, True)
        it += 1
        J = DL + sp.diags(dg)
        accepted = False
        lam = 1.0
        for _ in range(40):
            du = spsolve((eye / tau - J).tocsc(), F)
            if not np.all(np.isfinite(du)):
                tau *= 0.125
                continue
            full = project(u + du)
            F_full, dg_full = evaluate(full)
            res_full = _norm(F_full)
            # backtrack while the residual does not drop
            lam = 1.0
            trial, F_new, dg_new, res_new = full, F_full, dg_full, res_full
            for _ in range(max_backtracks):
                if np.isfinite(res_new) and res_new < res:
                    accepted = True
                    break
                lam *= 0.5
                trial = project(u + lam * du)
                F_new, dg_new = evaluate(trial)
                res_new = _norm(F_new)
            if not accepted and np.isfinite(res_new) and res_new < res:
                accepted = True
            if accepted:
                break
            # no decrease along du: take the full pseudo-time step if the
            # residual stays bounded (the flow may cross a residual ridge)
            if np.isfinite(res_full) and res_full < 4.0 * res:
                lam, trial, F_new, dg_new, res_new = 1.0, full, F_full, dg_full, res_full
                accepted = True
                tau *= 0.5
                break
            tau *= 0.125
            if tau < 1e-14:
                break
        if not accepted:
            break
        ratio = res / max(res_new, 1e-300)
        tau = min(tau_max, tau * min(max(ratio, 0.5), 1e3) * (1.0 if lam == 1.0 else 0.5))
        u, F, dg, res = trial, F_new, dg_new, res_new

    converged = bool(np.isfinite(res) and res <= atol)
    if not converged and raise_on_failure:
        raise NumericalError(
            "semilinear Newton iteration did not converge", residual=res, iterations=it, atol=atol
        )
    return NewtonResult(u, res, it, converged)


def newton_from_supersolution(reaction, u0, laplacian, diffusion, atol, lo=None, hi=None, max_iters=100):
    """Undamped Newton for ``diffusion * L u + g(u) = 0``.

    For concave ``g`` started at a supersolution the iterates decrease
    monotonically to the maximal solution, so no globalisation is needed.
    Returns a non-converged result (never raises) when an iterate leaves
    ``[lo, hi]`` or stalls; callers fall back to :func:`solve_semilinear`.
    """
    u = np.array(u0, dtype=float)
    DL = (diffusion * laplacian).tocsr()
    lo_arr = -np.inf if lo is None else lo
    hi_arr = np.inf if hi is None else hi
    res = np.inf
    for it in range(max_iters + 1):
        g, dg = reaction(u)
        F = DL @ u + g
        res = _norm(F)
        if not np.isfinite(res):
            return NewtonResult(u, res, it, False)
        if res <= atol:
            return NewtonResult(u, res, it, True)
        if it == max_iters:
            break
        du = spsolve((DL + sp.diags(dg)).tocsc(), -F)
        if not np.all(np.isfinite(du)):
            return NewtonResult(u, res, it, False)
        u = u + du
        if np.any(u < lo_arr - 1e-12 * np.abs(u).max()) or np.any(u > hi_arr + 1e-12 * np.abs(u).max()):
            return NewtonResult(u, res, it, False)
        u = np.clip(u, lo_arr, hi_arr)
    return NewtonResult(u, res, max_iters, False)
