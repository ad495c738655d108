"""Spatial SIS model with incidence beta S^q I^p and no-flux boundaries.

Endemic equilibria, the basic reproduction number, small-diffusion limit
profiles and convergence studies on Cartesian grids.
"""

from .config import ScenarioConfig, parse_config, serialize_config, sim1, sim2
from .equilibrium import EquilibriumState, solve_ee, verify_bounds
from .errors import (ConfigurationError, InfeasibleError, NoEndemicEquilibrium, NumericalError,
                     RegimeError, SISError, UsageError)
from .fields import CoefficientSpec
from .grid import DomainSpec, Grid, build_grid, integrate
from .model import Scenario
from .spectra import compute_r0

__all__ = [
    "CoefficientSpec", "ConfigurationError", "DomainSpec", "EquilibriumState", "Grid",
    "InfeasibleError", "NoEndemicEquilibrium", "NumericalError", "RegimeError", "SISError",
    "Scenario", "ScenarioConfig", "UsageError", "build_grid", "compute_r0", "integrate",
    "parse_config", "serialize_config", "sim1", "sim2", "solve_ee", "verify_bounds",
]

__version__ = "0.1.0"
