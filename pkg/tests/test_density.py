import math

import numpy as np
import pytest

from covcalc import expr as ex
from covcalc.density import (
    ChartMap,
    DensityError,
    determinant_weight_check,
    normalize_weight,
    restore_weight,
    transform_density,
    transform_metric,
)
from covcalc.fields import TensorField
from covcalc.grid import CoordinateChart
from covcalc.metric import MetricField, minkowski4, polar2


def _cartesian2():
    return CoordinateChart(("x", "y"), (0.05, 0.05), (2.5, 2.5))


def _polar_window():
    return CoordinateChart(("r", "theta"), (0.5, 0.1), (1.5, 1.4))


def _cart_to_polar():
    return ChartMap(
        _cartesian2(), _polar_window(),
        forward=["sqrt(x^2+y^2)", "atan(y/x)"],
        inverse=["r*cos(theta)", "r*sin(theta)"],
    )


def _flat2():
    return MetricField(_cartesian2(), [["1", "0"], ["0", "1"]],
                       signature=(0, 2))


def _scaling_map():
    target = CoordinateChart(("u", "v"), (0.1, 0.1), (5.0, 5.0))
    return ChartMap(_cartesian2(), target,
                    forward=["2*x", "2*y"], inverse=["u/2", "v/2"])


def test_identity_map_leaves_components_unchanged():
    chart = _cartesian2()
    target = CoordinateChart(("u", "v"), chart.lower, chart.upper)
    cmap = ChartMap(chart, target, forward=["x", "y"], inverse=["u", "v"])
    t = TensorField.from_expressions(chart, ["x^2", "x*y"], ("u",), 1.5)
    moved = transform_density(t, cmap)
    pts = target.random_points(100, rng=1)
    np.testing.assert_allclose(moved.at(pts), t.at(pts), rtol=1e-13)


def test_bad_inverse_is_rejected():
    with pytest.raises(DensityError, match="identity"):
        ChartMap(_cartesian2(), _polar_window(),
                 forward=["sqrt(x^2+y^2)", "atan(y/x)"],
                 inverse=["r*cos(theta)", "r*sin(theta)+0.01"])


def test_dimension_mismatch_rejected():
    three = CoordinateChart(("a", "b", "c"), (0,) * 3, (1,) * 3)
    with pytest.raises(DensityError, match="dimension"):
        ChartMap(_cartesian2(), three, ["x", "y"], ["a", "b", "c"])


def test_cartesian_to_polar_metric_components():
    moved = transform_metric(_flat2(), _cart_to_polar())
    pts = _polar_window().random_points(200, rng=2)
    g = moved.at(pts).g
    r = pts[:, 0]
    np.testing.assert_allclose(g[:, 0, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(g[:, 1, 1], r**2, rtol=1e-12)
    assert np.max(np.abs(g[:, 0, 1])) <= 1e-12


def test_cartesian_to_polar_against_pointwise_oracle():
    # ordinary transformation law applied with explicit loops at each point
    cmap = _cart_to_polar()
    t = TensorField.from_expressions(
        _cartesian2(), [["x^2", "y"], ["y", "x*y"]], ("d", "d"), 0.0)
    moved = transform_density(t, cmap)
    pts = _polar_window().random_points(50, rng=3)
    src = cmap.map_to_source(pts)
    vals_src = t.at(src)
    env = cmap.target.env_from_points(pts)
    jac = np.empty((len(pts), 2, 2))
    for i in range(2):
        for j in range(2):
            jac[:, i, j] = ex.evaluate(cmap.jac_inverse[i][j], env)
    expected = np.empty_like(vals_src)
    for n in range(len(pts)):
        for mu in range(2):
            for nu in range(2):
                acc = 0.0
                for a in range(2):
                    for b in range(2):
                        acc += jac[n, a, mu] * jac[n, b, nu] * vals_src[n, a, b]
                expected[n, mu, nu] = acc
    np.testing.assert_allclose(moved.at(pts), expected, rtol=1e-11, atol=1e-12)


def test_uniform_scaling_scalar_density_weight_one():
    cmap = _scaling_map()
    phi = TensorField.from_expressions(_cartesian2(), "x+y", (), 1.0)
    moved = transform_density(phi, cmap)
    pts = cmap.target.random_points(100, rng=4)
    src = cmap.map_to_source(pts)
    # |del x / del x'| = 1/4 in two dimensions for x' = 2x
    np.testing.assert_allclose(moved.at(pts), 0.25 * src.sum(axis=1),
                               rtol=1e-13)


def test_weight_zero_needs_no_jacobian_determinant():
    cmap = _scaling_map()
    v = TensorField.from_expressions(_cartesian2(), ["x", "y"], ("u",), 0.0)
    moved = transform_density(v, cmap)
    pts = cmap.target.random_points(50, rng=5)
    src = cmap.map_to_source(pts)
    np.testing.assert_allclose(moved.at(pts), 2.0 * src, rtol=1e-13)


def test_determinant_weight_identity_map():
    chart = _cartesian2()
    target = CoordinateChart(("u", "v"), chart.lower, chart.upper)
    cmap = ChartMap(chart, target, ["x", "y"], ["u", "v"])
    report = determinant_weight_check(_flat2(), cmap)
    assert report.max_relative_deviation == 0.0


def test_determinant_weight_cartesian_to_polar():
    report = determinant_weight_check(_flat2(), _cart_to_polar())
    assert report.max_relative_deviation <= 1e-12


def test_determinant_weight_random_linear_map_minkowski():
    rng = np.random.default_rng(6)
    a = rng.uniform(-1.0, 1.0, (4, 4)) + 2.0 * np.eye(4)
    a_inv = np.linalg.inv(a)
    m = minkowski4(lower=[-3.0] * 4, upper=[3.0] * 4)
    target = CoordinateChart(("p", "q", "s", "w"), [-1.0] * 4, [1.0] * 4)

    def linear(coeffs, names):
        return ["+".join(f"{float(coeffs[i, j])!r}*{names[j]}"
                         for j in range(4)) for i in range(4)]

    cmap = ChartMap(m.chart, target,
                    forward=linear(a, m.chart.names),
                    inverse=linear(a_inv, target.names))
    report = determinant_weight_check(m, cmap)
    assert report.max_relative_deviation <= 1e-10


def test_composition_of_transforms_matches_composed_map():
    chart = _cartesian2()
    mid = CoordinateChart(("u", "v"), (0.1, 0.1), (5.0, 5.0))
    final = CoordinateChart(("p", "q"), (0.15, 0.2), (6.0, 6.5))
    map_a = ChartMap(chart, mid, ["2*x", "2*y"], ["u/2", "v/2"])
    map_b = ChartMap(mid, final, ["u+0.05", "1.3*v"], ["p-0.05", "q/1.3"])
    composed = ChartMap(chart, final,
                        ["2*x+0.05", "2.6*y"],
                        ["(p-0.05)/2", "q/2.6"])
    pts = final.random_points(100, rng=7)
    for w in (-1.0, 0.0, 1.0, 2.0):
        t = TensorField.from_expressions(chart, ["x*y", "x^2"], ("u",), w)
        two_step = transform_density(transform_density(t, map_a), map_b)
        one_step = transform_density(t, composed)
        np.testing.assert_allclose(two_step.at(pts), one_step.at(pts),
                                   rtol=1e-11, atol=1e-13)


def test_weight_zero_transform_commutes_with_contraction():
    cmap = _scaling_map()
    t = TensorField.from_expressions(
        _cartesian2(), [["x", "y^2"], ["x*y", "2"]], ("u", "d"), 0.0)
    from covcalc.calculus import contract
    pts = cmap.target.random_points(100, rng=8)
    a = transform_density(contract(t, 0, 1), cmap).at(pts)
    b = contract(transform_density(t, cmap), 0, 1).at(pts)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_normalize_weight_zero_is_identity():
    m = polar2()
    t = TensorField.from_expressions(m.chart, ["r", "0"], ("u",), 0.0)
    assert normalize_weight(t, m) is t


def test_normalize_sqrtg_gives_unit_scalar():
    m = polar2()
    f = m.sqrt_det_field(1.0)
    flat = normalize_weight(f, m)
    assert flat.weight == 0.0
    pts = m.chart.random_points(100, rng=9)
    np.testing.assert_allclose(flat.at(pts), 1.0, rtol=1e-13)


def test_normalize_restore_round_trip():
    m = polar2()
    t = TensorField.from_expressions(m.chart, ["r^2*sin(theta)", "1/r"],
                                     ("u",), 2.0)
    back = restore_weight(normalize_weight(t, m), m, 2.0)
    assert back.weight == 2.0
    pts = m.chart.random_points(200, rng=10)
    assert np.max(np.abs(back.at(pts) - t.at(pts))) <= 1e-13


def test_restore_rejects_weighted_input():
    m = polar2()
    t = TensorField.from_expressions(m.chart, "r", (), 1.0)
    with pytest.raises(DensityError, match="weight-0"):
        restore_weight(t, m, 1.0)


def test_transform_requires_matching_source_chart():
    cmap = _scaling_map()
    t = TensorField.from_expressions(cmap.target, ["u", "v"], ("u",), 0.0)
    with pytest.raises(DensityError, match="source chart"):
        transform_density(t, cmap)
