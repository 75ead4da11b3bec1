import math

import numpy as np
import pytest

from covcalc import expr as ex
from covcalc.grid import CoordinateChart, GridSpec
from covcalc.metric import (
    MetricError,
    MetricField,
    metric_at,
    minkowski4,
    polar2,
    preset,
    schwarzschild,
    spherical3,
    static_spherical,
)


def test_minkowski_point_data():
    m = minkowski4()
    data = m.at([[0.3, 0.1, 0.5, 0.9]])
    eta = np.diag([-1.0, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(data.g[0], eta)
    np.testing.assert_allclose(data.ginv[0], eta)
    assert data.det[0] == pytest.approx(1.0)
    assert data.sqrtg[0] == pytest.approx(1.0)
    np.testing.assert_allclose(data.dg, 0.0)


def test_flat_spherical_sqrtg_is_r2_sin_theta():
    m = static_spherical("1", "1")
    data = m.at([[0.0, 2.0, math.pi / 2, 0.0]])
    assert data.sqrtg[0] == pytest.approx(4.0, abs=1e-12)


def test_polar_determinant():
    m = polar2(lower=[1.0, 0.0], upper=[3.5, 2 * math.pi])
    data = m.at([[3.0, 1.0]])
    assert data.det[0] == pytest.approx(9.0, abs=1e-12)
    assert data.sqrtg[0] == pytest.approx(3.0, abs=1e-12)


def test_schwarzschild_g_tt_at_r4():
    m = schwarzschild(mass=1.0)
    data = m.at([[0.0, 4.0, math.pi / 2, 0.0]])
    assert data.g[0, 0, 0] == pytest.approx(-0.5, abs=1e-13)
    # independent recomputation of every diagonal entry
    r, theta = 4.0, math.pi / 2
    f = 1.0 - 2.0 / r
    expected = np.diag([-f, 1.0 / f, r**2, (r * math.sin(theta)) ** 2])
    np.testing.assert_allclose(data.g[0], expected, atol=1e-12)


def test_metric_at_alias():
    m = minkowski4()
    data = metric_at(m, [[0.0, 0.0, 0.0, 0.0]])
    assert data.sqrtg[0] == pytest.approx(1.0)


def test_unknown_preset():
    with pytest.raises(MetricError, match="unknown preset"):
        preset("kerr")


def test_nonpositive_mass():
    with pytest.raises(MetricError, match="mass"):
        schwarzschild(mass=-2.0)


def test_horizon_crossing_bounds_rejected():
    with pytest.raises(MetricError, match="outside"):
        schwarzschild(mass=1.0, lower=[0.0, 1.5, 0.3, 0.0])


def test_polar_origin_rejected():
    with pytest.raises(MetricError, match="r = 0"):
        polar2(lower=[0.0, 0.0])


def test_polar_axis_rejected():
    with pytest.raises(MetricError, match="polar axis"):
        spherical3(lower=[1.0, 0.0, 0.0])


def test_inverse_is_exact_inverse_at_random_points():
    m = schwarzschild(mass=1.0)
    pts = m.chart.random_points(100, rng=5)
    data = m.at(pts)
    identity = np.einsum("nij,njk->nik", data.ginv, data.g)
    np.testing.assert_allclose(identity,
                               np.broadcast_to(np.eye(4), identity.shape),
                               atol=1e-12)


def _nondiagonal_metric():
    chart = CoordinateChart(("u", "v"), (0.5, 0.5), (2.0, 2.0))
    comp = [["1+u^2", "u*v/4"],
            ["u*v/4", "2+sin(v)"]]
    return MetricField(chart, comp, signature=(0, 2))


def test_determinant_derivative_contraction_identity():
    # d(det)/dx^l equals det * g^{na} g_{an,l} for both a preset and a
    # non-diagonal metric
    for m in (schwarzschild(1.0), _nondiagonal_metric()):
        pts = m.chart.random_points(100, rng=8)
        env = m.chart.env_from_points(pts)
        data = m.at(pts)
        for lam in range(m.dim):
            ddet = ex.evaluate(ex.differentiate(m.det_expr, m.chart.names[lam]),
                               env)
            contraction = data.det * m.det_sign * np.einsum(
                "nij,nji->n", data.ginv, data.dg[..., lam]
            )
            scale = np.maximum(1.0, np.abs(ddet))
            assert np.max(np.abs(ddet - contraction) / scale) < 1e-12


def test_diagonal_sqrtg_equals_product_of_roots():
    m = schwarzschild(1.0)
    pts = m.chart.random_points(200, rng=9)
    data = m.at(pts)
    diag = np.abs(np.einsum("nii->ni", data.g))
    np.testing.assert_allclose(data.sqrtg, np.sqrt(diag).prod(axis=1),
                               rtol=1e-12)


def test_degenerate_metric_rejected():
    chart = CoordinateChart(("x", "y"), (-1.0, 0.0), (1.0, 1.0))
    with pytest.raises(MetricError, match="degenerate|signature"):
        MetricField(chart, [["x", "0"], ["0", "1"]], signature=(0, 2))


def test_signature_mismatch_rejected():
    chart = CoordinateChart(("t", "x"), (0.0, 0.0), (1.0, 1.0))
    with pytest.raises(MetricError, match="signature"):
        MetricField(chart, [["-1", "0"], ["0", "1"]], signature=(0, 2))


def test_signature_dimension_consistency():
    chart = CoordinateChart(("t", "x"), (0.0, 0.0), (1.0, 1.0))
    with pytest.raises(MetricError, match="incompatible"):
        MetricField(chart, [["-1", "0"], ["0", "1"]], signature=(1, 3))


def test_symmetric_storage_mirrors_upper_triangle():
    m = _nondiagonal_metric()
    pts = m.chart.random_points(50, rng=2)
    g = m.at(pts).g
    np.testing.assert_array_equal(g, np.swapaxes(g, -1, -2))


def test_sqrt_det_field_carries_weight():
    m = polar2()
    f = m.sqrt_det_field(2.0)
    assert f.weight == 2.0
    pts = m.chart.random_points(20, rng=1)
    np.testing.assert_allclose(f.at(pts), pts[:, 0] ** 2, rtol=1e-12)


def test_grid_data_channels_agree_for_smooth_metric():
    m = polar2(lower=[1.0, 0.0], upper=[2.0, 2 * math.pi])
    grid = GridSpec(m.chart, (48, 16))
    exact = m.grid_data(grid, derivatives="analytic")
    approx = m.grid_data(grid, derivatives="fd", order=4)
    assert exact.provenance == "analytic"
    assert approx.provenance == "fd"
    np.testing.assert_allclose(exact.g, approx.g, atol=1e-13)
    assert np.max(np.abs(exact.dg - approx.dg)) < 1e-9


def test_sample_backed_metric_round_trip():
    m = polar2(lower=[1.0, 0.0], upper=[2.0, 2 * math.pi])
    grid = GridSpec(m.chart, (32, 12))
    values = np.empty(grid.shape + (2, 2))
    env = grid.env()
    for i in range(2):
        for j in range(2):
            values[..., i, j] = ex.evaluate(m.component_exprs[i][j], env)
    sampled = MetricField.from_samples(grid, values, signature=(0, 2))
    assert not sampled.is_analytic
    data = sampled.grid_data(grid)
    np.testing.assert_allclose(data.sqrtg, m.grid_data(grid).sqrtg, atol=1e-13)
    with pytest.raises(MetricError, match="analytic"):
        sampled.grid_data(grid, derivatives="analytic")


def test_sample_backed_metric_has_no_point_evaluator():
    grid = GridSpec(polar2().chart, (8, 8))
    values = np.broadcast_to(np.eye(2), grid.shape + (2, 2))
    sampled = MetricField.from_samples(grid, values, signature=(0, 2))
    with pytest.raises(MetricError):
        sampled.at([[1.5, 1.0]])
