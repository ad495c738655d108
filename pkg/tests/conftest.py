import numpy as np
import pytest

from spatial_sis.config import ScenarioConfig, sim1
from spatial_sis.fields import CoefficientSpec
from spatial_sis.grid import DomainSpec
from spatial_sis.model import Scenario


def constant_config(**overrides):
    base = dict(
        p=1.0, q=1.0, d_S=1.0, d_I=1.0,
        domain=DomainSpec("rectangle", ((-1.0, 1.0), (-1.0, 1.0)), 9),
        beta=CoefficientSpec.constant(2.0), gamma=CoefficientSpec.constant(1.0),
        N=4.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture
def const_scenario():
    return Scenario.from_config(constant_config())


@pytest.fixture(scope="session")
def sim1_small():
    """sim1 on a coarse 33-cell disk: cheap but genuinely heterogeneous."""
    return Scenario.from_config(sim1(domain=DomainSpec("masked_disk", 1.0, 33)))


@pytest.fixture(scope="session")
def sim1_default():
    return Scenario.from_config(sim1())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
