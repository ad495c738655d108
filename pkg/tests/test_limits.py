import numpy as np
import pytest

from spatial_sis import limits
from spatial_sis.config import sim1
from spatial_sis.errors import RegimeError
from spatial_sis.fields import CoefficientSpec
from spatial_sis.grid import DomainSpec, integrate
from spatial_sis.model import Scenario

from conftest import constant_config

UNIT = DomainSpec("rectangle", ((0.0, 1.0), (0.0, 1.0)), 5)


def unit_const(beta, gamma, **kw):
    return Scenario.from_config(constant_config(domain=UNIT, beta=CoefficientSpec.constant(beta),
                                                gamma=CoefficientSpec.constant(gamma), **kw))


def rel(value, target):
    return abs(value - target) / abs(target)


# ------------------------------------------------------------ S_*, I_*


@pytest.mark.parametrize("N, expected", [(0.75, (np.sqrt(13.0) - 1) / 8), (1.5, 0.5)])
def test_S_star_quadratic(N, expected):
    # r = 0.5, p = 0.5, q = 1: S + (S/r)^2 = S + 4 S^2 = N
    sc = unit_const(2.0, 1.0, p=0.5, q=1.0, N=N)
    assert limits.solve_S_star(sc) == pytest.approx(expected, rel=1e-13)


def test_S_star_approaches_min_as_p_to_one(sim1_small):
    target = min(sim1_small.N / sim1_small.measure, sim1_small.risk.r_min ** 2)
    gaps = [abs(limits.solve_S_star(sim1_small.with_params(p=p, q=0.5)) - target)
            for p in (0.9, 0.99, 0.999)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02 * target


def test_I_star_example():
    sc = unit_const(1.0, 1.0, p=0.5, q=0.5, N=2.0)
    assert limits.solve_I_star(sc) == pytest.approx(1.0, rel=1e-13)


def test_I_star_approaches_excess_as_p_to_one(sim1_small):
    target = (sim1_small.N - integrate(sim1_small.grid, sim1_small.risk.r ** 2)) / sim1_small.measure
    assert target > 0
    gaps = [abs(limits.solve_I_star(sim1_small.with_params(p=p, q=0.5)) - target)
            for p in (0.9, 0.99, 0.999)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02 * target


@pytest.mark.parametrize("p, q", [(0.5, 0.5), (0.3, 2.0), (0.8, 1.0)])
def test_scalar_residuals_on_sim1(sim1_small, p, q):
    sc = sim1_small.with_params(p=p, q=q)
    s = limits.solve_S_star(sc)
    assert abs(limits.S_star_map(sc, s) - sc.N) <= 1e-12 * sc.N
    i = limits.solve_I_star(sc)
    assert abs(limits.I_star_map(sc, i) - sc.N) <= 1e-12 * sc.N
    density = sc.N / sc.measure
    n_star = limits.solve_N_star(sc)
    b = np.max(sc.beta / sc.gamma) ** (1 / (1 - p))
    assert abs(n_star + b * n_star ** (q / (1 - p)) - density) <= 1e-12 * density
    m_star = limits.solve_M_star(sc)
    assert abs(m_star + sc.risk.r_max ** (1 / q) * m_star ** ((1 - p) / q) - density) <= 1e-12 * density
    assert 0 < n_star <= density and 0 < m_star <= density


def test_maps_are_monotone(sim1_small):
    sc = sim1_small.with_params(p=0.5, q=0.5)
    grid = np.linspace(1e-3, 2.0, 10)
    for fn in (limits.S_star_map, limits.I_star_map):
        vals = [fn(sc, s) for s in grid]
        assert np.all(np.diff(vals) > 0)
    vals = [limits.kappa_sigma_map(sc.with_params(p=1.0), k, 0.7) for k in grid]
    assert np.all(np.diff(vals) > 0)
    vals = [limits.G_sigma(sc, k, 0.7) for k in grid]
    assert np.all(np.diff(vals) > 0)


def test_N_star_and_M_star_examples():
    sc = unit_const(1.0, 1.0, p=0.5, q=0.5, N=2.0)
    assert limits.solve_N_star(sc) == pytest.approx(1.0, rel=1e-13)
    assert limits.solve_M_star(sc) == pytest.approx(1.0, rel=1e-13)


def test_sublinear_solvers_reject_p_one(sim1_small):
    with pytest.raises(RegimeError):
        limits.solve_S_star(sim1_small)


# ----------------------------------------------------------- joint, p = 1


def test_closed_form_above_sigma_star(sim1_small):
    sc = sim1_small
    s_star = limits.sigma_star(sc)
    for sigma in (s_star, 1.5 * s_star, 10 * s_star, 1e3 * s_star):
        kappa, _, _ = limits.solve_kappa_sigma_p1(sc, sigma)
        assert rel(kappa, limits.kappa_sigma_closed_form(sc, sigma)) <= 1e-10
    # below sigma* the closed form undershoots r_max^(1/q) and is no longer exact
    kappa, _, _ = limits.solve_kappa_sigma_p1(sc, 0.5 * s_star)
    assert rel(kappa, limits.kappa_sigma_closed_form(sc, 0.5 * s_star)) > 1e-6


def test_sigma_star_is_onset(sim1_small):
    sc = sim1_small
    s_star = limits.sigma_star(sc)
    kappa, _, _ = limits.solve_kappa_sigma_p1(sc, s_star)
    assert kappa == pytest.approx(sc.risk.r_max ** 2, rel=1e-10)


@pytest.mark.parametrize("sigma", [0.1, 1.0, 30.0])
def test_joint_constant_r(sigma):
    # r = 0.5, q = 1, |Omega| = 1, N = 0.8 > r: kappa = r + sigma (N - r)
    sc = unit_const(2.0, 1.0, N=0.8)
    kappa, S, I = limits.solve_kappa_sigma_p1(sc, sigma)
    assert kappa == pytest.approx(0.5 + sigma * 0.3, rel=1e-12)
    np.testing.assert_allclose(S, 0.5, rtol=1e-12)
    np.testing.assert_allclose(I, 0.3, rtol=1e-10)


def test_joint_sim1_mass(sim1_small):
    kappa, S, I = limits.solve_kappa_sigma_p1(sim1_small, 1.0)
    assert abs(integrate(sim1_small.grid, S + I) - sim1_small.N) <= 1e-12 * sim1_small.N
    assert np.all(S >= 0) and np.all(I >= 0)


def test_critical_population_large_sigma(sim1_small):
    sc = sim1_small.with_params(N=integrate(sim1_small.grid, sim1_small.r_root))
    r_max = sc.risk.r_max ** 2
    gaps = [r_max - limits.solve_kappa_sigma_p1(sc, s)[0] for s in (1e2, 1e4, 1e6)]
    assert gaps[0] > gaps[1] > gaps[2] >= -1e-12
    assert gaps[2] < 1e-2 * r_max


def test_large_sigma_infected_uniform(sim1_small):
    sc = sim1_small
    c = (sc.N - integrate(sc.grid, sc.r_root)) / sc.measure
    spread = np.ptp(sc.r_root)
    for sigma in (10.0, 1e3, 1e6):
        err = np.max(np.abs(limits.solve_kappa_sigma_p1(sc, sigma)[2] - c))
        # above sigma* the deviation is exactly |mean r^(1/q) - r^(1/q)| / sigma
        assert err <= spread / sigma * (1 + 1e-9)
    assert np.max(np.abs(limits.solve_kappa_sigma_p1(sc, 1e6)[2] - c)) < 1e-4 * c


@pytest.fixture(scope="module")
def sim1_on_peaks():
    # 66 cells per axis put nodes on (0.5, 0.5) and (-0.5, -0.5), where r = 0.4
    return Scenario.from_config(sim1(domain=DomainSpec("masked_disk", 1.0, 66)))


def test_small_sigma_mass_converges(sim1_on_peaks):
    sc = sim1_on_peaks
    target = sc.N - sc.measure * 0.16
    errs = [abs(limits.kappa_sigma_asymptotics(sc, small_sigma=s).small_sigma["mass_I"] - target)
            for s in (1e-4, 1e-6, 1e-8)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 1e-4


def test_small_sigma_mass_quadrature(sim1_on_peaks):
    sc = sim1_on_peaks
    assert sc.risk.r_min == pytest.approx(0.4, abs=1e-15)
    rep = limits.kappa_sigma_asymptotics(sc, small_sigma=1e-6)
    assert abs(rep.small_sigma["mass_I"] - (sc.N - sc.measure * 0.16)) <= 1e-4
    assert rep.small_sigma["kappa_minus_rmin"] >= 0
    assert rep.regime == "above" and rep.sigma_star > 0


def test_kappa_infty_and_regime_errors(sim1_small):
    sc = sim1_small.with_params(N=0.5 * sim1_small.measure)
    k = limits.solve_kappa_infty(sc)
    assert abs(integrate(sc.grid, np.minimum(k, sc.r_root)) - sc.N) <= 1e-12 * sc.N
    with pytest.raises(RegimeError):
        limits.sigma_star(sc)
    with pytest.raises(RegimeError):
        limits.solve_kappa_infty(sim1_small)
    rep = limits.kappa_sigma_asymptotics(sc)
    assert rep.regime == "below" and rep.kappa_infty == pytest.approx(k)


# ---------------------------------------------------------- joint, p < 1


def test_I_sigma_pointwise_examples(sim1_small):
    sc = unit_const(1.0, 1.0, p=0.5, q=0.5, N=1.0)
    np.testing.assert_array_equal(limits.solve_I_sigma_pointwise(0.0, 1.0, sc), 0.0)
    np.testing.assert_allclose(limits.solve_I_sigma_pointwise(0.6, 1.0, sc), 0.3, rtol=1e-14)
    sc1 = sim1_small.with_params(p=0.5, q=0.5)
    prev = limits.solve_I_sigma_pointwise(0.0, 2.0, sc1)
    for k in np.linspace(0.05, 3.0, 12):
        cur = limits.solve_I_sigma_pointwise(k, 2.0, sc1)
        assert np.all(cur > prev)
        prev = cur


def test_kappa_sigma_plt1_unit_sigma(sim1_small):
    sc = sim1_small.with_params(p=0.5, q=0.5)
    kappa, I, S = limits.solve_kappa_sigma_plt1(sc, 1.0)
    assert kappa == pytest.approx(sc.N / sc.measure, rel=1e-12)


def test_kappa_sigma_plt1_residual(sim1_small):
    sc = sim1_small.with_params(p=0.5, q=0.5)
    kappa, I, S = limits.solve_kappa_sigma_plt1(sc, 2.0)
    assert abs(limits.lu2_residual(sc, kappa, 2.0)) <= 1e-12 * sc.N
    assert abs(integrate(sc.grid, S + I) - sc.N) <= 1e-12 * sc.N


def test_kappa_sigma_plt1_constant_r_matches_I_star():
    # constant r: I_sigma is constant and the N-constraint is the I_* equation
    sc = unit_const(2.0, 1.0, p=0.5, q=0.5, N=0.9)
    kappa, I, S = limits.solve_kappa_sigma_plt1(sc, 3.0)
    assert np.ptp(I) <= 1e-14
    assert I[0] == pytest.approx(limits.solve_I_star(sc), rel=1e-10)


def test_small_sigma_joins_dI_limit():
    sc = unit_const(2.0, 1.0, p=0.5, q=0.5, N=0.9)
    prof_j = limits.profile_joint(sc, 1e-4)
    prof_d = limits.profile_dI_to_0(sc)
    assert np.max(np.abs(prof_j.S_limit - prof_d.S_limit)) <= 1e-3
    assert np.max(np.abs(prof_j.I_limit - prof_d.I_limit)) <= 1e-3


# ------------------------------------------------------- nonlocal problem


def _nonlocal_residual(sc, sol):
    w = 1.0 - sc.d_I * sol.I_star
    m = integrate(sc.grid, w)
    lap = sc.grid.laplacian @ sol.I_star
    return (sc.d_I * lap + sc.beta * (sc.N**sc.q * w**sc.q / m**sc.q - sc.risk.r) * sol.I_star), m


def test_nonlocal_reduced_population(sim1_small):
    sc = sim1_small.with_params(N=0.5 * sim1_small.measure, d_I=1.0)
    sol = limits.solve_nonlocal_Istar(sc)
    resid, m = _nonlocal_residual(sc, sol)
    assert np.max(np.abs(resid)) <= 1e-8
    assert m == pytest.approx(sol.m, rel=1e-10)
    assert np.all(sol.I_star > 0) and np.all(sc.d_I * sol.I_star < 1)
    assert integrate(sc.grid, sol.S_star) == pytest.approx(sc.N, rel=1e-12)


def test_nonlocal_no_solution_at_high_density(sim1_small):
    sc = sim1_small.with_params(N=1.01 * sim1_small.risk.r_max ** 2 * sim1_small.measure, d_I=1.0)
    with pytest.raises(RegimeError):
        limits.solve_nonlocal_Istar(sc)


def test_profiles_nonnegative(sim1_small):
    for sc in (sim1_small, sim1_small.with_params(p=0.5), sim1_small.with_params(N=0.5 * sim1_small.measure)):
        for prof in (limits.profile_dI_to_0(sc), limits.profile_dS_to_0(sc), limits.profile_joint(sc, 0.3)):
            assert np.all(prof.S_limit >= 0) and np.all(prof.I_limit >= 0)
