import numpy as np
import pytest

from spatial_sis.config import sim2
from spatial_sis.errors import ConfigurationError
from spatial_sis.fields import (CoefficientSpec, evaluate, evaluate_coefficients, read_table,
                                risk_set, sim2_profile)
from spatial_sis.grid import DomainSpec, build_grid, rectangle
from spatial_sis.model import Scenario


def _nearest(grid, point):
    return int(np.argmin(np.linalg.norm(grid.node_coords - np.asarray(point), axis=1)))


def test_sim1_values_at_peak():
    grid = rectangle((0.0, 1.0), (0.0, 1.0), 4)  # nodes at 0.125, 0.375, ...
    beta = evaluate(CoefficientSpec("sim1_beta"), grid)
    # exact value at (0.5, 0.5) from the formula itself
    x, y = grid.node_coords.T
    np.testing.assert_allclose(beta, 1.5 + np.sin(np.pi * x) * np.sin(np.pi * y), rtol=0, atol=1e-15)
    peak = rectangle((0.0, 1.0), (0.0, 1.0), 3)  # centre node sits at (0.5, 0.5)
    b, g, risk = evaluate_coefficients(CoefficientSpec("sim1_beta"), CoefficientSpec("sim1_gamma"), peak)
    c = _nearest(peak, (0.5, 0.5))
    np.testing.assert_allclose(peak.node_coords[c], 0.5, atol=1e-15)
    assert b[c] == pytest.approx(2.5, abs=1e-15)
    assert g[c] == 1.0
    assert risk.r[c] == pytest.approx(0.4, abs=1e-15)
    assert risk.r_min == risk.r[c]
    assert risk.r_min ** (1 / 0.5) == pytest.approx(0.16, abs=1e-14)


def test_sim1_coefficient_ranges(sim1_default):
    sc = sim1_default
    assert sc.beta.min() >= 0.5 and sc.beta.max() <= 2.5
    assert np.all(sc.gamma == 1.0)
    assert 0.4 <= sc.risk.r_min and sc.risk.r_max <= 2.0
    assert np.all((sc.risk.r >= sc.risk.r_min) & (sc.risk.r <= sc.risk.r_max))


def test_constant_risk_everywhere(const_scenario):
    risk = const_scenario.risk
    np.testing.assert_array_equal(risk.r, 0.5)
    assert risk.risk_set_mask.all()
    assert risk_set(risk, 0.0).all() and risk_set(risk, 1.0).all()
    np.testing.assert_allclose(risk.risk_indicator, 2.0)


def test_sim1_risk_set_near_two_points(sim1_default):
    sc = sim1_default
    mask = risk_set(sc.risk, 1e-6)
    grid = sc.grid
    assert mask.any()
    expected = {_nearest(grid, (0.5, 0.5)), _nearest(grid, (-0.5, -0.5))}
    # on this grid the minimum is attained symmetrically at nodes next to both points
    pts = grid.node_coords[mask]
    d = np.minimum(np.linalg.norm(pts - 0.5, axis=1), np.linalg.norm(pts + 0.5, axis=1))
    assert np.all(d <= grid.h)
    assert any(np.allclose(p, 0.5, atol=grid.h) for p in pts)
    assert any(np.allclose(p, -0.5, atol=grid.h) for p in pts)
    assert set(np.flatnonzero(mask)) >= {i for i in expected if mask[i]}


def test_sim2_profile_flat_minimum():
    x = np.array([0.0, 0.2, 0.25, 0.3, 0.625, 0.9, -0.1])
    f = sim2_profile(x)
    assert np.all(f[:3] == f[0])
    assert f[4] == pytest.approx(f[0])
    assert f[3] > f[0] and f[5] > f[0] and f[6] > f[0]


def test_sim2_risk_set_components():
    sc = Scenario.from_config(sim2())
    mask = risk_set(sc.risk, 1e-6)
    pts = sc.grid.node_coords[mask]
    h = sc.grid.h
    tol = h / 2 + 1e-12

    def in_square(p):
        return np.all((p >= -tol) & (p <= 0.25 + tol))

    def on_seg(p):
        near_x = abs(p[0] - 0.625) <= tol and -tol <= p[1] <= 0.25 + tol
        near_y = abs(p[1] - 0.625) <= tol and -tol <= p[0] <= 0.25 + tol
        return near_x or near_y

    def at_point(p):
        return np.all(np.abs(p - 0.625) <= tol)

    assert all(in_square(p) or on_seg(p) or at_point(p) for p in pts)
    # each component is represented on this grid
    assert any(in_square(p) for p in pts)
    assert sum(in_square(p) for p in pts) > 4
    assert any(on_seg(p) and p[0] > 0.5 for p in pts)
    assert any(on_seg(p) and p[1] > 0.5 for p in pts)
    assert any(at_point(p) for p in pts)


def test_nonpositive_coefficient_rejected():
    grid = rectangle((0.0, 1.0), (0.0, 1.0), 3)
    with pytest.raises(ConfigurationError):
        evaluate_coefficients(CoefficientSpec.constant(-1.0), CoefficientSpec.constant(1.0), grid)
    with pytest.raises(ConfigurationError):
        evaluate_coefficients(CoefficientSpec.constant(1.0), CoefficientSpec.constant(0.0), grid)


def test_risk_set_negative_tolerance_rejected(const_scenario):
    with pytest.raises(ConfigurationError):
        risk_set(const_scenario.risk, -1.0)


def test_table_matches_nearest_node(tmp_path):
    grid = build_grid(DomainSpec("rectangle", ((0.0, 1.0), (0.0, 1.0)), 3))
    rows = ["x,y,value"]
    order = np.arange(grid.n)[::-1]  # order independence
    for i in order:
        x, y = grid.node_coords[i]
        rows.append(f"{x + 1e-3},{y - 1e-3},{i + 1.0}")
    path = tmp_path / "beta.csv"
    path.write_text("\n".join(rows) + "\n")
    np.testing.assert_array_equal(read_table(path, grid), np.arange(grid.n) + 1.0)
    spec = CoefficientSpec("table", (), str(path))
    np.testing.assert_array_equal(evaluate(spec, grid), np.arange(grid.n) + 1.0)
