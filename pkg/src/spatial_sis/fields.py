"""Transmission/recovery coefficients, the risk function r = gamma/beta and
the highest-risk set, plus the two disk scenarios used as presets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, check_field

FORMS = ("constant", "sim1_beta", "sim1_gamma", "sim2_beta", "sim2_gamma", "table")


@dataclass(frozen=True)
class CoefficientSpec:
    """A coefficient function of space.

    ``table`` holds either per-node values (array) or a path to a CSV with
    header ``x[,y],value``; rows are matched to the nearest grid node.
    """

    form: str
    params: tuple = ()
    table: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigurationError(f"unknown coefficient form {self.form!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))

    @classmethod
    def constant(cls, value) -> "CoefficientSpec":
        return cls("constant", (value,))

    @classmethod
    def tabulated(cls, values) -> "CoefficientSpec":
        return cls("table", (), np.asarray(values, dtype=float))


def sim2_profile(x):
    """Piecewise quadratic f with f = 0.5 on [0, 0.25] and at 0.625."""
    x = np.asarray(x, dtype=float)
    return np.select(
        [x <= 0.0, x <= 0.25, x <= 0.5],
        [0.5 + 0.4 * x**2, np.full_like(x, 0.5), 0.5 + 0.4 * (x - 0.25) ** 2],
        default=0.5 + 1.6 * (x - 0.625) ** 2,
    )


def _xy(grid: Grid):
    x = grid.node_coords[:, 0]
    y = grid.node_coords[:, 1] if grid.dim > 1 else np.zeros_like(x)
    return x, y


def read_table(path, grid: Grid) -> np.ndarray:
    """Load ``x[,y],value`` rows and assign each node its nearest row."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [[float(v) for v in row] for row in reader if row]
    except (OSError, StopIteration, ValueError) as exc:
        raise ConfigurationError(f"cannot read coefficient table {path}: {exc}")
    expected = ["x", "value"] if grid.dim == 1 else ["x", "y", "value"]
    if header != expected:
        raise ConfigurationError(f"coefficient table header must be {','.join(expected)}, got {header}")
    data = np.asarray(rows, dtype=float)
    from scipy.spatial import cKDTree

    _, nearest = cKDTree(data[:, :-1]).query(grid.node_coords)
    return data[nearest, -1]


def evaluate(spec: CoefficientSpec, grid: Grid) -> np.ndarray:
    x, y = _xy(grid)
    p = spec.params
    if spec.form == "constant":
        if len(p) != 1:
            raise ConfigurationError("constant coefficient needs exactly one value")
        return np.full(grid.n, p[0])
    if spec.form == "sim1_beta":
        base, amp = (p + (1.5, 1.0)[len(p):])[:2]
        return base + amp * np.sin(np.pi * x) * np.sin(np.pi * y)
    if spec.form == "sim1_gamma":
        return np.full(grid.n, p[0] if p else 1.0)
    if spec.form == "sim2_beta":
        return np.full(grid.n, p[0] if p else 0.5)
    if spec.form == "sim2_gamma":
        return sim2_profile(x) * sim2_profile(y)
    if isinstance(spec.table, (str, Path)):
        return read_table(spec.table, grid)
    if spec.table is None:
        raise ConfigurationError("table coefficient needs values or a CSV path")
    return check_field(grid, spec.table).copy()


@dataclass(frozen=True, eq=False)
class RiskData:
    r: np.ndarray
    r_min: float
    r_max: float
    risk_set_mask: np.ndarray
    risk_indicator: np.ndarray
    tol_riskset: float


def default_riskset_tol(r: np.ndarray, grid: Grid) -> float:
    """Band width for the discrete highest-risk set.

    A smooth minimum is resolved to O(h^2) on the nodes, hence the
    ``h^2 * (r_max - r_min)`` slack on top of a relative floor.
    """
    spread = float(r.max() - r.min())
    return 1e-8 * spread + grid.h**2 * spread


def risk_set(risk: RiskData, tol_riskset: float) -> np.ndarray:
    if tol_riskset < 0:
        raise ConfigurationError("tol_riskset must be non-negative", key="tol_riskset")
    return risk.r <= risk.r_min + tol_riskset


def evaluate_coefficients(spec_beta, spec_gamma, grid: Grid, total_population=None, tol_riskset=None):
    """Return ``(beta, gamma, risk)`` sampled on ``grid``.

    ``risk.risk_indicator`` is ``N beta / (|Omega| gamma)``; when the total
    population is not given ``N = |Omega|`` is used.
    """
    beta = evaluate(spec_beta, grid)
    gamma = evaluate(spec_gamma, grid)
    for name, values in (("beta", beta), ("gamma", gamma)):
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            bad = int(np.argmin(np.where(np.isfinite(values), values, -np.inf)))
            raise ConfigurationError(
                f"{name} must be positive on every node; got {values[bad]!r} at {grid.node_coords[bad]}",
                key=name,
            )
    r = gamma / beta
    tol = default_riskset_tol(r, grid) if tol_riskset is None else float(tol_riskset)
    if tol < 0:
        raise ConfigurationError("tol_riskset must be non-negative", key="tol_riskset")
    N = grid.domain_measure if total_population is None else float(total_population)
    r_min = float(r.min())
    risk = RiskData(
        r=r,
        r_min=r_min,
        r_max=float(r.max()),
        risk_set_mask=r <= r_min + tol,
        risk_indicator=N * beta / (grid.domain_measure * gamma),
        tol_riskset=tol,
    )
    return beta, gamma, risk
