"""Principal eigenvalues: the basic reproduction number, Fisher-KPP
thresholds and the mixed-boundary patch problem of the d_I -> 0 limit.

All eigenproblems share one shape::

    B phi = mu W phi,    B symmetric positive (semi)definite, W = diag(w) > 0,

and we want the smallest ``mu``. With uniform cell weights the discrete
Laplacian is symmetric, so the problem is rewritten as the standard
symmetric problem ``C psi = mu psi``, ``C = W^-1/2 B W^-1/2``, and solved
by inverse iteration followed by Rayleigh quotient iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import label
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .errors import InfeasibleError, NumericalError, RegimeError, UsageError
from .grid import Grid, check_field, integrate
from .model import Scenario
from .nonlinear import newton_from_supersolution, solve_semilinear

A_CAP = 1e6


@dataclass
class EigenPair:
    mu: float
    phi: np.ndarray
    iterations: int
    residual: float


def smallest_generalized(B, w, shift=0.0, tol=1e-12, max_iter=2000) -> EigenPair:
    """Smallest ``mu`` of ``B phi = mu diag(w) phi`` with a positive ``phi``.

    ``shift`` is added to ``mu`` internally when ``B`` is only semidefinite
    (pure Neumann Laplacian). ``phi`` is normalised to ``max phi = 1``.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise UsageError("eigen weight must be positive")
    n = w.size
    iw = 1.0 / np.sqrt(w)
    C = (sp.diags(iw) @ sp.csr_matrix(B) @ sp.diags(iw) + shift * sp.identity(n)).tocsc()

    psi = np.sqrt(w)  # W^1/2 * ones: a positive start
    psi /= np.linalg.norm(psi)
    lu = splu(C)
    mu = float(psi @ (C @ psi))
    it = 0
    # plain inverse iteration until the eigenvalue settles to a few digits
    while it < max_iter:
        it += 1
        x = lu.solve(psi)
        psi_new = x / np.linalg.norm(x)
        mu_new = float(psi_new @ (C @ psi_new))
        done = abs(mu_new - mu) <= 1e-6 * abs(mu_new)
        psi, mu = psi_new, mu_new
        if done:
            break
    # Rayleigh quotient iteration; cubic once close
    for _ in range(20):
        res = C @ psi - mu * psi
        if np.linalg.norm(res) <= tol * max(abs(mu), 1.0):
            break
        it += 1
        try:
            x = splu((C - mu * sp.identity(n)).tocsc()).solve(psi)
        except RuntimeError:  # exactly singular: mu is an eigenvalue already
            break
        if not np.all(np.isfinite(x)):
            break
        psi_new = x / np.linalg.norm(x)
        mu_new = float(psi_new @ (C @ psi_new))
        if abs(mu_new - mu) > 1e-3 * abs(mu) + 1e-12:
            break  # wandered off towards another eigenvalue; keep the old pair
        psi, mu = psi_new, mu_new
    # polish with one last inverse step at the final shift
    for _ in range(3):
        x = lu.solve(psi)
        psi_new = x / np.linalg.norm(x)
        mu_new = float(psi_new @ (C @ psi_new))
        if mu_new <= mu:
            psi, mu = psi_new, mu_new
        else:
            break
    if psi.sum() < 0:
        psi = -psi
    phi = iw * psi
    phi /= np.max(np.abs(phi))
    residual = float(np.linalg.norm(C @ psi - mu * psi))
    if not np.all(np.isfinite(phi)):
        raise NumericalError("eigen iteration produced non-finite values", iterations=it)
    return EigenPair(mu - shift, phi, it, residual)


# --------------------------------------------------------------- R0


@dataclass
class R0Result:
    value: float
    eigenfunction: np.ndarray
    iterations: int
    residual: float


def r0_operators(sc: Scenario, d_I=None):
    d_I = sc.d_I if d_I is None else d_I
    a = (sc.N / sc.measure) ** sc.q
    B = -d_I * sc.grid.laplacian + sp.diags(sc.gamma)
    return B, a * sc.beta


def rayleigh_quotient(sc: Scenario, psi, d_I=None) -> float:
    """``integral(a beta psi^2) / integral(d_I |grad psi|^2 + gamma psi^2)``."""
    B, w = r0_operators(sc, d_I)
    psi = check_field(sc.grid, psi)
    return float((psi * w) @ psi / (psi @ (B @ psi)))


def compute_r0(sc: Scenario, d_I=None) -> R0Result:
    """Largest ``lambda`` of ``a beta phi = lambda (-d_I L + gamma) phi``, ``a = (N/|Omega|)^q``.

    Only meaningful for ``p = 1``; other values raise :class:`RegimeError`.
    """
    if sc.p != 1.0:
        raise RegimeError(f"R0 is defined for p = 1 only, got p = {sc.p}")
    B, w = r0_operators(sc, d_I)
    pair = smallest_generalized(B, w)
    if pair.mu <= 0:
        raise NumericalError("non-positive eigenvalue in R0 problem", mu=pair.mu)
    value = 1.0 / pair.mu
    phi = pair.phi
    if np.any(phi <= 0):
        raise NumericalError("R0 eigenfunction is not positive", min_phi=float(phi.min()))
    return R0Result(value, phi, pair.iterations, pair.residual)


# --------------------------------------------------------- Fisher-KPP


@dataclass
class KPPResult:
    u: np.ndarray
    a: float
    b: float
    a_low: float
    positive: bool
    iterations: int = 0
    residual: float = 0.0


def _dirichlet_shift(grid: Grid) -> float:
    return 0.0 if grid.has_dirichlet else 1.0


def principal_dirichlet(grid: Grid, beta) -> EigenPair:
    """Smallest ``mu`` of ``-L phi = mu beta phi`` on ``grid`` (any boundary mix)."""
    beta = check_field(grid, beta)
    return smallest_generalized(-grid.laplacian, beta, shift=_dirichlet_shift(grid))


def kpp_threshold(b: float, grid: Grid, beta) -> float:
    """``a_low(b) = b mu_1``: below it the only nonnegative solution is zero."""
    if not b > 0:
        raise ValueError("b must be positive")
    return b * max(principal_dirichlet(grid, beta).mu, 0.0)


def _kpp_newton(a, b, grid, beta, u0=None, tol=1e-12):
    coef = beta / b

    def reaction(u):
        return coef * (a - u) * u, coef * (a - 2.0 * u)

    atol = tol * a * max(np.max(coef) * a, 1.0)
    # u = a is a supersolution and the reaction is concave in u
    res = newton_from_supersolution(reaction, np.full(grid.n, a), grid.laplacian, 1.0, atol,
                                    lo=0.0, hi=a, max_iters=200)
    if res.converged:
        return res
    u0 = np.full(grid.n, a) if u0 is None else np.clip(u0, 0.0, a)
    return solve_semilinear(
        reaction, u0, grid.laplacian, 1.0, atol=atol,
        lo=0.0, hi=a, max_iters=400, tau0=1.0 / (np.max(coef) * a + 1.0),
    )


def solve_fisher_kpp(a: float, b: float, grid: Grid, beta, use_threshold=True, u0=None) -> KPPResult:
    """Stable nonnegative solution of ``L u + (beta/b)(a - u) u = 0``.

    The iteration starts at the supersolution ``u = a`` and follows the
    decreasing flow, so it lands on the maximal (stable) solution. With
    ``use_threshold`` the answer ``u = 0`` is returned straight away when
    ``a <= a_low``.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    beta = check_field(grid, beta)
    a_low = kpp_threshold(b, grid, beta)
    if use_threshold and a <= a_low:
        return KPPResult(np.zeros(grid.n), a, b, a_low, False)
    res = _kpp_newton(a, b, grid, beta, u0)
    u = res.u
    positive = bool(np.max(u) > 1e-8 * a)
    return KPPResult(u, a, b, a_low, positive, res.iterations, res.residual)


def kpp_threshold_bisection(b: float, grid: Grid, beta, lo: float, hi: float, rtol=1e-4) -> float:
    """Threshold located by bisecting on positivity of the nonlinear solve.

    Independent of the eigen-solver; used as a cross-check.
    """
    beta = check_field(grid, beta)

    def positive(a):
        res = _kpp_newton(a, b, grid, beta, tol=1e-13)
        return bool(np.max(res.u) > 1e-7 * a)

    if positive(lo) or not positive(hi):
        raise NumericalError("threshold not bracketed", lo=lo, hi=hi)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ------------------------------------------------------ patch problem


def risk_patches(sc: Scenario, mask=None) -> list[Grid]:
    """Connected components of the highest-risk set as mixed-boundary grids.

    Connectivity is by lattice faces. Faces towards removed nodes are
    Dirichlet, faces on the outer boundary stay Neumann.
    """
    mask = sc.risk.risk_set_mask if mask is None else check_field(sc.grid, mask, dtype=bool)
    g = sc.grid
    lattice = np.zeros(g.lattice_shape, dtype=bool)
    lattice[tuple(g.lattice_index.T)] = mask
    labels, count = label(lattice)
    node_labels = labels[tuple(g.lattice_index.T)]
    return [g.restrict(node_labels == k) for k in range(1, count + 1)]


@dataclass
class PatchSolution:
    a_hat: float
    profiles: list
    masses: list
    thresholds: list
    patches: list = field(repr=False, default_factory=list)

    def assemble(self, n: int) -> np.ndarray:
        """Scatter the patch profiles into a field on the parent grid."""
        out = np.zeros(n)
        for g, u in zip(self.patches, self.profiles):
            out[g.parent_nodes] = u
        return out


def solve_limit_patch(sc: Scenario, patches=None, mass_target=None, a_cap=A_CAP) -> PatchSolution:
    """Common level ``a_hat`` and profiles of the limit patch problem (p = q = 1).

    On each patch ``L I + (beta/d_S)(a_hat - I) I = 0``. One ``a_hat`` is
    shared by all patches and fixed by ``sum of integral I = mass_target``
    (default ``N - |Omega| r_min``); patches whose threshold exceeds
    ``a_hat`` carry no mass.
    """
    if sc.p != 1.0 or sc.q != 1.0:
        raise RegimeError("the patch problem is posed for p = q = 1")
    if patches is None:
        patches = risk_patches(sc)
    elif isinstance(patches, Grid):
        patches = [patches]
    for g in patches:
        if g.parent_nodes is None:
            raise UsageError("patches must be restricted from the scenario grid")
    if mass_target is None:
        mass_target = sc.N - sc.measure * sc.risk.r_min
    if not mass_target > 0:
        raise InfeasibleError(f"mass target must be positive, got {mass_target}")
    b = sc.d_S
    betas = [sc.beta[g.parent_nodes] for g in patches]
    thresholds = [kpp_threshold(b, g, bt) for g, bt in zip(patches, betas)]
    warm = [None] * len(patches)

    def solve_all(a):
        out = []
        for k, (g, bt) in enumerate(zip(patches, betas)):
            if a <= thresholds[k]:
                out.append(np.zeros(g.n))
                continue
            u0 = None if warm[k] is None else np.minimum(warm[k][1] * a / warm[k][0], a)
            r = solve_fisher_kpp(a, b, g, bt, u0=u0)
            if r.positive:
                warm[k] = (a, r.u)
            out.append(r.u)
        return out

    def excess(a):
        return sum(integrate(g, u) for g, u in zip(patches, solve_all(a))) - mass_target

    lo = min(thresholds)
    if excess(a_cap) < 0:
        raise InfeasibleError(f"mass target unreachable below the a_hat cap {a_cap:g}")
    hi = max(lo * 2, mass_target / sum(g.domain_measure for g in patches), 1e-12)
    while excess(hi) < 0:
        lo, hi = hi, min(2 * hi, a_cap)
    a_hat = brentq(excess, lo, hi, xtol=1e-14 * hi, rtol=1e-15, maxiter=200)
    profiles = solve_all(a_hat)
    masses = [integrate(g, u) for g, u in zip(patches, profiles)]
    return PatchSolution(float(a_hat), profiles, masses, thresholds, list(patches))
