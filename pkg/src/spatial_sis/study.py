"""Convergence studies: equilibria along decreasing diffusivities compared
with the predicted limit profiles."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import limits
from .equilibrium import solve_ee
from .errors import SISError, UsageError
from .grid import integrate
from .model import Scenario

CSV_COLUMNS = ("param", "err_S_inf", "err_I", "concentration", "kappa_over_dS", "residual", "converged")


@dataclass
class StudyRow:
    param: float
    err_S_inf: float
    err_I: float
    concentration: float
    kappa_over_dS: float
    residual: float
    converged: bool
    extra: dict = field(default_factory=dict)


@dataclass
class StudyReport:
    rows: list
    regime: str
    fitted_slope: float | None = None
    header: dict = field(default_factory=dict)
    states: list = field(default_factory=list, repr=False)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("".join(f"# {k} = {_fmt(v)}\n" for k, v in self.header.items()))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r.param), _fmt(r.err_S_inf), _fmt(r.err_I), _fmt(r.concentration),
                            _fmt(r.kappa_over_dS), _fmt(r.residual), int(r.converged)])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def concentration_metric(I, risk_mask, delta: float, grid) -> float:
    """Share of ``integral I`` on nodes within ``delta`` of the risk set."""
    risk_mask = np.asarray(risk_mask, dtype=bool)
    if not risk_mask.any():
        raise UsageError("risk set is empty; concentration is undefined")
    if delta < grid.h * (1 - 1e-12):
        raise UsageError(f"delta = {delta} is below the grid spacing {grid.h}")
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(grid.node_coords[risk_mask]).query(grid.node_coords)
    near = dist <= delta * (1 + 1e-12)
    total = integrate(grid, I)
    if total <= 0:
        return float("nan")
    return float(min(max(integrate(grid, np.where(near, I, 0.0)) / total, 0.0), 1.0))


def log_slope(x, y) -> float | None:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _descending(values):
    vals = [float(v) for v in values]
    if any(not v > 0 for v in vals):
        raise UsageError("swept values must be positive")
    return sorted(vals, reverse=True)


def _solve_row(args):
    sc, d_S, d_I = args
    try:
        return solve_ee(sc.with_diffusion(d_S=d_S, d_I=d_I)), None
    except SISError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _solve_all(sc, pairs, jobs):
    tasks = [(sc, dS, dI) for dS, dI in pairs]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_solve_row, tasks))
    return [_solve_row(t) for t in tasks]


def _failed(param, message):
    nan = float("nan")
    return StudyRow(param, nan, nan, nan, nan, nan, False, {"error": message})


def _regime_excess(sc: Scenario) -> float:
    return sc.N - integrate(sc.grid, sc.r_root)


def _base_header(sc: Scenario, swept: str) -> dict:
    return {"swept": swept, "p": sc.p, "q": sc.q, "d_S": sc.d_S, "d_I": sc.d_I, "N": sc.N,
            "excess": _regime_excess(sc)}


def sweep_dI(sc: Scenario, dI_values, delta=None, jobs=1) -> StudyReport:
    """Equilibria for decreasing ``d_I`` at fixed ``d_S``.

    For ``p = 1``: ``err_S_inf`` is the distance to ``r_min^(1/q)`` and
    ``err_I`` the mass defect ``|integral I - (N - |Omega| r_min^(1/q))|``.
    For ``p < 1``: distances to ``S_*`` and ``(S_*^q / r)^(1/(1-p))``.
    """
    values = _descending(dI_values)
    delta = 3 * sc.grid.h if delta is None else delta
    profile = limits.profile_dI_to_0(sc)
    results = _solve_all(sc, [(sc.d_S, v) for v in values], jobs)
    header = _base_header(sc, "d_I")
    header.update({"delta": delta, **profile.scalars})
    mask = sc.risk.risk_set_mask
    rows, states = [], []
    for v, (st, err) in zip(values, results):
        states.append(st)
        if st is None:
            rows.append(_failed(v, err))
            continue
        err_S = float(np.max(np.abs(st.S - profile.S_limit)))
        if sc.p == 1.0:
            err_I = abs(integrate(sc.grid, st.I) - profile.scalars["mass_I"])
        else:
            err_I = float(np.max(np.abs(st.I - profile.I_limit)))
        rows.append(StudyRow(
            v, err_S, err_I, concentration_metric(st.I, mask, delta, sc.grid),
            st.kappa / st.d_S, st.pde_residual, st.converged,
            {"I_inf": float(np.max(st.I)), "I_mass": integrate(sc.grid, st.I)},
        ))
    slope = log_slope([r.param for r in rows], [r.err_S_inf for r in rows])
    return StudyReport(rows, profile.kind, slope, header, states)


def sweep_dS(sc: Scenario, dS_values, delta=None, jobs=1) -> StudyReport:
    """Equilibria for decreasing ``d_S`` at fixed ``d_I``; targets by regime.

    * ``p < 1``: ``(r^(1/q) I_*^((1-p)/q), I_*)``.
    * ``p = 1``, ``N > integral r^(1/q)``: ``(r^(1/q), (N - integral r^(1/q))/|Omega|)``.
    * ``p = 1``, ``N <= integral r^(1/q)``: ``S`` against ``S*`` of the nonlocal
      problem, ``err_I = ||I||_inf``; ``fitted_slope`` is the log-log rate of
      ``||I||_inf``. When ``N`` equals the integral both ``S*`` and
      ``r^(1/q)`` are admissible and the smaller distance is reported.
    """
    values = _descending(dS_values)
    delta = 3 * sc.grid.h if delta is None else delta
    excess = _regime_excess(sc)
    critical = sc.p == 1.0 and abs(excess) <= 1e-12 * sc.N
    nonlocal_sol = None
    if sc.p == 1.0 and excess <= 0:
        nonlocal_sol = limits.solve_nonlocal_Istar(sc)
    profile = limits.profile_dS_to_0(sc, nonlocal_sol) if not critical else None
    results = _solve_all(sc, [(v, sc.d_I) for v in values], jobs)
    header = _base_header(sc, "d_S")
    header["delta"] = delta
    if profile is not None:
        header.update(profile.scalars)
    rows, states = [], []
    rr = sc.r_root
    for v, (st, err) in zip(values, results):
        states.append(st)
        if st is None:
            rows.append(_failed(v, err))
            continue
        extra = {"I_inf": float(np.max(st.I)), "dist_r_root": float(np.max(np.abs(st.S - rr)))}
        if nonlocal_sol is not None:
            extra["dist_S_nonlocal"] = float(np.max(np.abs(st.S - nonlocal_sol.S_star)))
        if critical:
            err_S = min(extra["dist_r_root"], extra.get("dist_S_nonlocal", math.inf))
            err_I = extra["I_inf"]
        elif profile.kind == "dS_to_0_p1_small":
            err_S = extra["dist_S_nonlocal"]
            err_I = extra["I_inf"]
        else:
            err_S = float(np.max(np.abs(st.S - profile.S_limit)))
            err_I = float(np.max(np.abs(st.I - profile.I_limit)))
        rows.append(StudyRow(v, err_S, err_I, concentration_metric(st.I, sc.risk.risk_set_mask, delta, sc.grid),
                             st.kappa / st.d_S, st.pde_residual, st.converged, extra))
    kind = "dS_to_0_p1_small" if critical else profile.kind
    if kind == "dS_to_0_p1_small":
        slope = log_slope([r.param for r in rows], [r.extra.get("I_inf", math.nan) for r in rows])
        ratios = [r.kappa_over_dS for r in rows if r.converged]
        if ratios:
            header["C_star_estimate"] = max(ratios)
            header["C_star_range"] = f"{values[-1]:.3g}..{values[0]:.3g}"
    else:
        slope = log_slope([r.param for r in rows], [r.err_S_inf for r in rows])
    return StudyReport(rows, kind, slope, header, states)


def sweep_joint(sc: Scenario, sigma: float, dI_values, delta=None, jobs=1) -> StudyReport:
    """Equilibria along ``d_S = d_I / sigma`` compared with ``(S_sigma, I_sigma)``."""
    if not sigma > 0:
        raise UsageError("sigma must be positive")
    values = _descending(dI_values)
    delta = 3 * sc.grid.h if delta is None else delta
    profile = limits.profile_joint(sc, sigma)
    results = _solve_all(sc, [(v / sigma, v) for v in values], jobs)
    header = _base_header(sc, "d_I")
    header.update({"sigma": sigma, "delta": delta, **profile.scalars})
    rows, states = [], []
    for v, (st, err) in zip(values, results):
        states.append(st)
        if st is None:
            rows.append(_failed(v, err))
            continue
        rows.append(StudyRow(
            v,
            float(np.max(np.abs(st.S - profile.S_limit))),
            float(np.max(np.abs(st.I - profile.I_limit))),
            concentration_metric(st.I, sc.risk.risk_set_mask, delta, sc.grid),
            st.kappa / st.d_S, st.pde_residual, st.converged,
            {"S_limit_inf": float(np.max(profile.S_limit)), "I_limit_inf": float(np.max(profile.I_limit))},
        ))
    slope = log_slope([r.param for r in rows], [r.err_S_inf for r in rows])
    return StudyReport(rows, profile.kind, slope, header, states)
