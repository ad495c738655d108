"""A configured scenario: grid, sampled coefficients, risk data and N."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .fields import RiskData, evaluate, evaluate_coefficients
from .grid import Grid, build_grid, integrate


@dataclass(frozen=True, eq=False)
class Scenario:
    cfg: ScenarioConfig
    grid: Grid
    beta: np.ndarray
    gamma: np.ndarray
    risk: RiskData
    S0: np.ndarray
    I0: np.ndarray

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, grid: Grid | None = None) -> "Scenario":
        grid = build_grid(cfg.domain) if grid is None else grid
        S0 = evaluate(cfg.S0, grid)
        I0 = evaluate(cfg.I0, grid)
        if np.any(S0 < 0) or np.any(I0 < 0):
            from .errors import ConfigurationError

            raise ConfigurationError("initial data must be non-negative")
        if cfg.N is not None:
            total = integrate(grid, S0 + I0)
            if total > 0:
                S0 = S0 * (cfg.N / total)
                I0 = I0 * (cfg.N / total)
        N = integrate(grid, S0 + I0) if cfg.N is None else cfg.N
        beta, gamma, risk = evaluate_coefficients(cfg.beta, cfg.gamma, grid, N, cfg.tol_riskset)
        return cls(cfg, grid, beta, gamma, risk, S0, I0)

    @property
    def N(self) -> float:
        return self.cfg.N if self.cfg.N is not None else integrate(self.grid, self.S0 + self.I0)

    @property
    def measure(self) -> float:
        return self.grid.domain_measure

    @property
    def p(self) -> float:
        return self.cfg.p

    @property
    def q(self) -> float:
        return self.cfg.q

    @property
    def d_S(self) -> float:
        return self.cfg.d_S

    @property
    def d_I(self) -> float:
        return self.cfg.d_I

    def with_params(self, **changes) -> "Scenario":
        """Same grid and coefficients, different scalars (d_S, d_I, p, q, N...)."""
        cfg = self.cfg.replace(**changes)
        if "N" in changes and changes["N"] is not None:
            scale = changes["N"] / integrate(self.grid, self.S0 + self.I0)
            S0, I0 = self.S0 * scale, self.I0 * scale
        else:
            S0, I0 = self.S0, self.I0
        risk = self.risk
        if "N" in changes:
            N = changes["N"] if changes["N"] is not None else integrate(self.grid, S0 + I0)
            risk = RiskData(
                r=risk.r,
                r_min=risk.r_min,
                r_max=risk.r_max,
                risk_set_mask=risk.risk_set_mask,
                risk_indicator=N * self.beta / (self.measure * self.gamma),
                tol_riskset=risk.tol_riskset,
            )
        return Scenario(cfg, self.grid, self.beta, self.gamma, risk, S0, I0)

    def with_diffusion(self, d_S=None, d_I=None) -> "Scenario":
        return self.with_params(
            d_S=self.d_S if d_S is None else d_S, d_I=self.d_I if d_I is None else d_I
        )

    @property
    def r_root(self) -> np.ndarray:
        """r^(1/q) at the nodes."""
        return self.risk.r ** (1.0 / self.q)
