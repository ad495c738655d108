import pytest

from spatial_sis.config import (DEFAULT_TOLERANCES, parse_config, serialize_config, sim1, sim2)
from spatial_sis.errors import ConfigurationError
from spatial_sis.fields import CoefficientSpec
from spatial_sis.grid import DomainSpec

SIM1_TEXT = """\
# sim1
[model]
p = 1
q = 0.5
d_S = 1
d_I = 1e-5

[domain]
kind = masked_disk
extent = 1
resolution = 65

[coefficients]
beta = sim1_beta
gamma = sim1_gamma

[initial]
S0 = 0.8
I0 = 0.2
"""


def test_parse_sim1_file():
    cfg = parse_config(SIM1_TEXT)
    assert cfg.p == 1.0 and cfg.q == 0.5
    assert cfg.domain == DomainSpec("masked_disk", 1.0, 65)
    assert cfg.beta.form == "sim1_beta" and cfg.gamma.form == "sim1_gamma"
    assert cfg == sim1()


def test_defaults_filled_in():
    cfg = parse_config(SIM1_TEXT)
    for key, value in DEFAULT_TOLERANCES.items():
        assert getattr(cfg, key) == value
    assert cfg.N is None and cfg.tol_riskset is None


@pytest.mark.parametrize("cfg", [sim1(), sim2(N=2.0, d_I=0.3),
                                 sim1(domain=DomainSpec("rectangle", ((-1.0, 2.0), (0.0, 1.5)), (7, 5)),
                                      beta=CoefficientSpec.constant(2.0), tol_inner=1e-9, seed=7),
                                 sim1(domain=DomainSpec("interval", (0.0, 1.0), 11, "dirichlet"),
                                      p=0.5, tol_riskset=0.01, max_iters=12)])
def test_round_trip(cfg):
    assert parse_config(serialize_config(cfg)) == cfg


def test_p_above_one_rejected():
    text = SIM1_TEXT.replace("p = 1", "p = 1.5")
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert info.value.key == "p" and info.value.line == 3
    assert "(0, 1]" in str(info.value)


@pytest.mark.parametrize("edit, key, line", [
    (("d_S = 1", "d_S = fast"), "d_S", 5),
    (("d_I = 1e-5", "d_I = -1"), "d_I", 6),
    (("resolution = 65", "resolution = 6.5"), "resolution", 11),
    (("beta = sim1_beta", "beta = wobbly 1"), "beta", 14),
    (("gamma = sim1_gamma", "gamma = sim1_gamma\nbogus = 2"), "bogus", 16),
])
def test_errors_name_key_and_line(edit, key, line):
    with pytest.raises(ConfigurationError) as info:
        parse_config(SIM1_TEXT.replace(*edit))
    assert info.value.key == key
    assert info.value.line == line


def test_missing_required_key():
    with pytest.raises(ConfigurationError) as info:
        parse_config(SIM1_TEXT.replace("q = 0.5\n", ""))
    assert info.value.key == "q"


def test_unknown_section_and_stray_entry():
    with pytest.raises(ConfigurationError):
        parse_config("[extras]\nx = 1\n" + SIM1_TEXT)
    with pytest.raises(ConfigurationError):
        parse_config("p = 1\n" + SIM1_TEXT)


def test_constructor_validation():
    with pytest.raises(ConfigurationError):
        sim1(q=0.0)
    with pytest.raises(ConfigurationError):
        sim1(N=-1.0)
    with pytest.raises(ConfigurationError):
        sim1(max_iters=0)
