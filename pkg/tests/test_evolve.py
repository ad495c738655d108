import numpy as np
import pytest

from spatial_sis.equilibrium import solve_ee
from spatial_sis.evolve import (EvolutionState, IMEXStepper, default_dt, initial_state, relax_to_steady,
                                run_to_time, step_imex)
from spatial_sis.fields import CoefficientSpec
from spatial_sis.grid import integrate
from spatial_sis.model import Scenario
from spatial_sis.spectra import compute_r0

from conftest import constant_config


def test_constant_fixed_point(const_scenario):
    sc = const_scenario
    state = EvolutionState(np.full(sc.grid.n, 0.5), np.full(sc.grid.n, 0.5), 0.0, sc.N)
    new = step_imex(state, sc, 0.1)
    np.testing.assert_allclose(new.S, 0.5, rtol=0, atol=1e-12)
    np.testing.assert_allclose(new.I, 0.5, rtol=0, atol=1e-12)
    assert new.t == pytest.approx(0.1) and new.clipped_mass == 0.0


def test_balanced_exchange_keeps_sum(sim1_small):
    # S = r makes beta S I = gamma I at every node; equal diffusivities
    sc0 = sim1_small
    r = sc0.risk.r
    c = r.max() + 0.1
    cfg = sc0.cfg.replace(q=1.0, d_S=0.3, d_I=0.3, N=None,
                          S0=CoefficientSpec.tabulated(r), I0=CoefficientSpec.tabulated(c - r))
    sc = Scenario.from_config(cfg, grid=sc0.grid)
    stepper = IMEXStepper(sc)
    state = initial_state(sc)
    for _ in range(100):
        state = stepper.step(state, 0.05)
    np.testing.assert_allclose(state.S + state.I, c, rtol=0, atol=1e-12)


def test_sim1_mass_drift(sim1_default):
    sc = sim1_default
    stepper = IMEXStepper(sc)
    state = initial_state(sc)
    for _ in range(1000):
        state = stepper.step(state, 1e-3)
        assert state.S.min() >= 0 and state.I.min() >= 0
    assert abs(state.mass(sc.grid) - sc.N) <= 1e-10 * sc.N
    assert state.clipped_mass == 0.0


def test_constant_data_stay_constant(const_scenario):
    sc = const_scenario
    state = EvolutionState(np.full(sc.grid.n, 0.9), np.full(sc.grid.n, 0.1), 0.0, sc.N)
    for _ in range(50):
        state = step_imex(state, sc, 0.05)
        assert np.ptp(state.S) <= 1e-13 and np.ptp(state.I) <= 1e-13


def test_default_dt_heuristic(sim1_small):
    sc = sim1_small
    dt = default_dt(sc, sc.S0, sc.I0)
    rate = sc.beta * sc.S0**sc.q + sc.gamma
    assert dt * np.max(rate) <= 0.5 + 1e-12


def test_snapshots_hit_requested_times(sim1_small):
    out = run_to_time(sim1_small, 1.0, dt=0.3, snapshot_times=[0.0, 0.5])
    assert [s.t for s in out] == [0.0, 0.5, 1.0]
    assert out[0].steps == 0


def test_sim1_well_mixed_infected(sim1_default):
    sc = sim1_default.with_diffusion(d_S=1e-5, d_I=1.0)
    I = run_to_time(sc, 200.0)[-1].I
    assert np.ptp(I) <= 0.05 * np.mean(I)


def test_sim1_infected_level(sim1_default):
    sc = sim1_default.with_diffusion(d_S=1e-7, d_I=1e-3)
    I = run_to_time(sc, 2000.0)[-1].I
    assert np.max(np.abs(I - 0.24)) / 0.24 <= 0.1


def test_subthreshold_infection_decays(sim1_small):
    sc = sim1_small.with_params(N=0.3 * sim1_small.measure, d_I=10.0)
    assert compute_r0(sc).value < 1
    start = initial_state(sc)
    end = run_to_time(sc, 200.0)[-1]
    assert integrate(sc.grid, end.I) < integrate(sc.grid, start.I)


def test_relax_constant():
    st = relax_to_steady(constant_config(), tol_resid=1e-10)
    assert st.converged
    np.testing.assert_allclose(st.S, 0.5, atol=1e-6)
    np.testing.assert_allclose(st.I, 0.5, atol=1e-6)


def test_relax_to_disease_free():
    cfg = constant_config(N=0.3 * 4)
    sc = Scenario.from_config(cfg)
    assert compute_r0(sc).value < 1
    st = relax_to_steady(cfg, tol_resid=1e-10)
    assert st.converged
    np.testing.assert_allclose(st.S, 0.3, atol=1e-8)
    np.testing.assert_allclose(st.I, 0.0, atol=1e-8)


def test_relax_matches_direct_solver(sim1_default):
    sc = sim1_default.with_diffusion(d_S=1e-5, d_I=1e-5)
    direct = solve_ee(sc)
    relaxed = relax_to_steady(sc, tol_resid=1e-11)
    assert relaxed.converged
    assert np.max(np.abs(direct.S - relaxed.S)) <= 1e-5
    assert np.max(np.abs(direct.I - relaxed.I)) <= 1e-5


def test_relax_reports_non_convergence(sim1_small):
    st = relax_to_steady(sim1_small, tol_resid=1e-14, max_T=0.5, implicit=False)
    assert not st.converged
    assert "residual" in st.notes[0]
