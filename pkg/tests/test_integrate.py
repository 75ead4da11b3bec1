import math

import numpy as np
import pytest

from covcalc.density import ChartMap, transform_density, transform_metric
from covcalc.fields import TensorField
from covcalc.grid import CoordinateChart, GridSpec, convergence_rate
from covcalc.integrate import (
    IntegrateError,
    RegionSpec,
    gauss_check,
    mass_integral,
    surface_element,
    surface_integral,
    volume_integral,
)
from covcalc.metric import (
    MetricField,
    minkowski4,
    polar2,
    schwarzschild,
    spherical3,
    static_spherical,
)
from covcalc.physics import StressEnergyField, scalar_stress_energy

THETA_LO, THETA_HI = 0.1, math.pi - 0.1


def _shell(lo=1.0, hi=2.0):
    return spherical3(lower=[lo, THETA_LO, 0.0],
                      upper=[hi, THETA_HI, 2 * math.pi])


def _scalar(m, src):
    return TensorField.from_expressions(m.chart, src, (), 0.0)


def _vector(m, comps):
    return TensorField.from_expressions(m.chart, comps, ("u",), 0.0)


# ---------------------------------------------------------------------------
# volume integrals
# ---------------------------------------------------------------------------

def test_unit_box_volume_flat():
    m = minkowski4()
    grid = GridSpec(m.chart, (5, 5, 5, 5))
    region = RegionSpec([0, 0, 0, 0], [1, 1, 1, 1])
    assert volume_integral(_scalar(m, "1"), m, region, grid) == pytest.approx(1.0)


def test_spherical_shell_proper_volume():
    m = _shell()
    grid = GridSpec(m.chart, (33, 33, 32))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    got = volume_integral(_scalar(m, "1"), m, region, grid, rule="simpson")
    exact = (7.0 / 3.0) * 2 * math.pi * (math.cos(THETA_LO) - math.cos(THETA_HI))
    assert got == pytest.approx(exact, rel=1e-6)


def test_volume_refinement_reduces_error_at_rule_order():
    m = _shell()
    region = RegionSpec(m.chart.lower, m.chart.upper)
    f = _scalar(m, "exp(r)*sin(theta/3)")
    errors, spacings = [], []
    fine = GridSpec(m.chart, (129, 129, 8))
    reference = volume_integral(f, m, region, fine, rule="simpson")
    for n in (9, 17, 33):
        grid = GridSpec(m.chart, (n, n, 8))
        errors.append(abs(volume_integral(f, m, region, grid,
                                          rule="trapezoid") - reference))
        spacings.append(grid.spacing(0))
    assert convergence_rate(errors, spacings) == pytest.approx(2.0, abs=0.3)


def test_volume_rejects_vector_input():
    m = minkowski4()
    grid = GridSpec(m.chart, (5, 5, 5, 5))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    with pytest.raises(IntegrateError, match="scalar"):
        volume_integral(_vector(m, ["1", "0", "0", "0"]), m, region, grid)


def test_volume_rejects_weighted_scalar():
    m = _shell()
    grid = GridSpec(m.chart, (9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    with pytest.raises(IntegrateError, match="weight"):
        volume_integral(m.sqrt_det_field(1.0), m, region, grid)


def test_region_must_align_with_lattice():
    m = _shell()
    grid = GridSpec(m.chart, (11, 9, 8))
    region = RegionSpec([1.07, THETA_LO, 0.0], [2.0, THETA_HI, 2 * math.pi])
    with pytest.raises(IntegrateError, match="lattice plane"):
        volume_integral(_scalar(m, "1"), m, region, grid)


def test_region_outside_chart_rejected():
    m = _shell()
    grid = GridSpec(m.chart, (9, 9, 8))
    region = RegionSpec([0.5, THETA_LO, 0.0], [2.0, THETA_HI, 2 * math.pi])
    with pytest.raises(IntegrateError, match="exceeds chart bounds"):
        volume_integral(_scalar(m, "1"), m, region, grid)


def test_simpson_needs_odd_node_count():
    m = _shell()
    grid = GridSpec(m.chart, (10, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    with pytest.raises(IntegrateError, match="odd"):
        volume_integral(_scalar(m, "1"), m, region, grid, rule="simpson")


def test_sampled_scalar_integrand():
    m = _shell()
    grid = GridSpec(m.chart, (17, 17, 16))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    analytic = _scalar(m, "r*sin(theta)")
    sampled = analytic.sample(grid)
    a = volume_integral(analytic, m, region, grid)
    b = volume_integral(sampled, m, region, grid)
    assert a == pytest.approx(b, rel=1e-13)


# ---------------------------------------------------------------------------
# surface integrals
# ---------------------------------------------------------------------------

def test_constant_field_box_flux_cancels():
    m = minkowski4()
    grid = GridSpec(m.chart, (5, 5, 5, 5))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    flux = surface_integral(_vector(m, ["0.3", "1.0", "-2.0", "0.7"]), m,
                            region, grid)
    assert flux == pytest.approx(0.0, abs=1e-14)


def test_inverse_square_flux_through_shell():
    m = _shell()
    grid = GridSpec(m.chart, (33, 33, 32))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    P = _vector(m, ["1/r^2", "0", "0"])
    omega = 2 * math.pi * (math.cos(THETA_LO) - math.cos(THETA_HI))
    outer = surface_integral(P, m, region, grid, rule="simpson",
                             faces=[(0, +1)])
    inner = surface_integral(P, m, region, grid, rule="simpson",
                             faces=[(0, -1)])
    assert outer == pytest.approx(omega, rel=1e-6)
    assert inner == pytest.approx(-omega, rel=1e-6)
    net = surface_integral(P, m, region, grid, rule="simpson")
    assert net == pytest.approx(0.0, abs=1e-9)


def test_flux_orientation_negation_is_exact():
    m = _shell()
    grid = GridSpec(m.chart, (17, 17, 16))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    P = _vector(m, ["exp(r)", "sin(theta)", "1"])
    outward = surface_integral(P, m, region, grid)
    inward = surface_integral(P, m, region, grid, orientation=-1)
    assert outward == -inward
    assert outward != 0.0


def test_periodic_axis_has_no_faces():
    m = _shell()
    grid = GridSpec(m.chart, (9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    with pytest.raises(IntegrateError, match="no boundary face"):
        surface_integral(_vector(m, ["1", "0", "0"]), m, region, grid,
                         faces=[(2, +1)])


def test_surface_rejects_rank_two_input():
    m = _shell()
    grid = GridSpec(m.chart, (9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    rank2 = TensorField.from_expressions(
        m.chart, [["0"] * 3 for _ in range(3)], ("u", "u"), 0.0)
    with pytest.raises(IntegrateError, match="vector"):
        surface_integral(rank2, m, region, grid)


def test_no_flux_operation_exists_for_free_index_tensors():
    # the module's integral surface is exactly: scalars over volumes,
    # vectors over boundaries, and the fully contracted mass integral
    from covcalc import integrate
    entry_points = sorted(n for n in integrate.__all__ if "integral" in n)
    assert entry_points == ["mass_integral", "surface_integral",
                            "volume_integral"]


def test_surface_element_is_metric_normalized():
    for m, region, grid in [
        (_shell(), RegionSpec(_shell().chart.lower, _shell().chart.upper),
         GridSpec(_shell().chart, (9, 9, 8))),
        (schwarzschild(1.0),
         RegionSpec(schwarzschild(1.0).chart.lower,
                    schwarzschild(1.0).chart.upper),
         GridSpec(schwarzschild(1.0).chart, (5, 9, 9, 8))),
    ]:
        for axis, side in ((0, +1), (1, -1)):
            element = surface_element(m, grid, region, axis, side)
            env_pts = element.normal.reshape(-1, m.dim)
            # reconstruct g^{mn} n_m n_n on the face and check it is +/-1
            shape = element.normal.shape[:-1]
            coords = [np.broadcast_to(c, shape).ravel() for c in
                      np.meshgrid(*[grid.axis_coordinates(a)
                                    [_span(grid, region, a, axis, side)]
                                    for a in range(m.dim)], indexing="ij")]
            pts = np.stack(coords, axis=-1)
            ginv = m.at(pts, validate_signature=False).ginv
            norm2 = np.einsum("nab,na,nb->n", ginv, env_pts, env_pts)
            np.testing.assert_allclose(norm2, element.normal_square_sign,
                                       rtol=1e-12)


def _span(grid, region, a, face_axis, side):
    lo = grid.index_near(a, region.lower[a])
    if grid.chart.periodic[a]:
        n = grid.points_per_axis[a]
        return slice(0, n)
    hi = grid.index_near(a, region.upper[a])
    if a == face_axis:
        idx = lo if side < 0 else hi
        return slice(idx, idx + 1)
    return slice(lo, hi + 1)


# ---------------------------------------------------------------------------
# divergence theorem
# ---------------------------------------------------------------------------

def test_gauss_linear_field_on_flat_box():
    m = minkowski4()
    grid = GridSpec(m.chart, (5, 5, 5, 5))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    P = _vector(m, ["t+2*x", "x-y", "3*z", "t+z"])
    report = gauss_check(P, m, region, grid)
    assert report.residual <= 1e-12


def test_gauss_inverse_square_shell():
    m = _shell()
    grid = GridSpec(m.chart, (33, 33, 32))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    report = gauss_check(_vector(m, ["1/r^2", "0", "0"]), m, region, grid,
                         rule="simpson")
    assert abs(report.lhs) <= 1e-8
    assert abs(report.rhs) <= 1e-8
    assert report.residual <= 1e-8


def test_gauss_residual_converges_with_resolution():
    m = schwarzschild(1.0, lower=[0.0, 3.0, 0.3, 0.0],
                      upper=[1.0, 5.0, 2.8, 2 * math.pi])
    P = _vector(m, ["exp(-t)", "exp(r/3)/r^2", "theta", "sin(phi)+2"])
    region = RegionSpec(m.chart.lower, m.chart.upper)
    errors, spacings = [], []
    for n in (5, 9, 17):
        grid = GridSpec(m.chart, (n, n, n, max(8, n - 1)))
        report = gauss_check(P, m, region, grid, rule="simpson")
        errors.append(report.residual)
        spacings.append(grid.spacing(1))
    assert convergence_rate(errors, spacings) == pytest.approx(4.0, abs=0.3)


def test_gauss_report_dict_fields():
    m = minkowski4()
    grid = GridSpec(m.chart, (5, 5, 5, 5))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    report = gauss_check(_vector(m, ["t", "x", "y", "z"]), m, region, grid)
    d = report.as_dict()
    assert set(d) == {"lhs", "rhs", "residual", "resolution", "rule",
                      "channel", "order"}


# ---------------------------------------------------------------------------
# chart invariance of the proper volume
# ---------------------------------------------------------------------------

def test_proper_volume_invariant_under_linear_chart_change():
    source = CoordinateChart(("x", "y"), (0.2, 0.2), (1.0, 1.0))
    target = CoordinateChart(("u", "v"), (0.4, 0.6), (2.0, 3.0))
    cmap = ChartMap(source, target, ["2*x", "3*y"], ["u/2", "v/3"])
    m_src = MetricField(source, [["1+x^2", "0"], ["0", "2"]], signature=(0, 2))
    m_tgt = transform_metric(m_src, cmap)
    f_src = TensorField.from_expressions(source, "x*y+1", (), 0.0)
    f_tgt = transform_density(f_src, cmap)
    grid_src = GridSpec(source, (65, 65))
    grid_tgt = GridSpec(target, (65, 65))
    region_src = RegionSpec(source.lower, source.upper)
    region_tgt = RegionSpec(target.lower, target.upper)
    a = volume_integral(f_src, m_src, region_src, grid_src, rule="simpson")
    b = volume_integral(f_tgt, m_tgt, region_tgt, grid_tgt, rule="simpson")
    assert a == pytest.approx(b, rel=1e-10)


# ---------------------------------------------------------------------------
# mass integral
# ---------------------------------------------------------------------------

def _flat4():
    return static_spherical("1", "1", lower=[0.0, 1.0, 0.2, 0.0])


def _timelike(m):
    return TensorField.from_expressions(m.chart, ["1", "0", "0", "0"],
                                        ("u",), 0.0)


def test_vacuum_region_has_zero_mass():
    m = _flat4()
    zero = TensorField.from_expressions(
        m.chart, [["0"] * 4 for _ in range(4)], ("u", "u"), 0.0)
    grid = GridSpec(m.chart, (5, 9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    value = mass_integral(StressEnergyField(zero, m), _timelike(m), m,
                          region, grid)
    assert abs(value) <= 1e-12


def test_constant_scalar_has_zero_mass():
    m = _flat4()
    grid = GridSpec(m.chart, (5, 9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    value = mass_integral(scalar_stress_energy("2", m), _timelike(m), m,
                          region, grid)
    assert abs(value) <= 1e-12


def _oracle_mass(grid, region, phi_prime, prefactor=-1.0 / (16 * math.pi)):
    """Naive triple loop with hand-written flat-metric formulas; shares no
    tensor utilities with the library."""
    r_lo = grid.index_near(1, region.lower[1])
    r_hi = grid.index_near(1, region.upper[1])
    t_lo = grid.index_near(2, region.lower[2])
    t_hi = grid.index_near(2, region.upper[2])
    r_coords = grid.axis_coordinates(1)[r_lo:r_hi + 1]
    t_coords = grid.axis_coordinates(2)[t_lo:t_hi + 1]
    p_coords = grid.axis_coordinates(3)
    hr, ht, hp = grid.spacing(1), grid.spacing(2), grid.spacing(3)

    def w(i, n, h):
        return 0.5 * h if i in (0, n - 1) else h

    total = 0.0
    for i, r in enumerate(r_coords):
        wi = w(i, len(r_coords), hr)
        for j, th in enumerate(t_coords):
            wj = w(j, len(t_coords), ht)
            for phi_ang in p_coords:
                wk = hp  # periodic axis: equal weights
                dphi = phi_prime(r)
                # flat spherical metric: g^rr = 1, sqrt(g) = r^2 sin(theta)
                t_mix_tt = -dphi * dphi / (8 * math.pi)
                trace = -dphi * dphi / (4 * math.pi)
                integrand = (t_mix_tt - trace) * (r**2) * math.sin(th)
                total += wi * wj * wk * integrand
    return prefactor * total


def test_mass_matches_independent_naive_loop():
    m = _flat4()
    T = scalar_stress_energy("1/r", m)
    grid = GridSpec(m.chart, (5, 17, 17, 12))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    ours = mass_integral(T, _timelike(m), m, region, grid)
    oracle = _oracle_mass(grid, region, lambda r: -1.0 / r**2)
    assert ours == pytest.approx(oracle, abs=1e-8)


def test_mass_linear_in_stress_energy():
    m = _flat4()
    T = scalar_stress_energy("1/r", m)
    grid = GridSpec(m.chart, (5, 9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    k = _timelike(m)
    base = mass_integral(T, k, m, region, grid)
    scaled = mass_integral(T.scaled(2.5), k, m, region, grid)
    assert scaled == pytest.approx(2.5 * base, rel=1e-15)


def test_mass_linear_in_killing_field():
    m = _flat4()
    T = scalar_stress_energy("1/r", m)
    grid = GridSpec(m.chart, (5, 9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    base = mass_integral(T, _timelike(m), m, region, grid)
    k3 = TensorField.from_expressions(m.chart, ["3", "0", "0", "0"],
                                      ("u",), 0.0)
    assert mass_integral(T, k3, m, region, grid) == pytest.approx(
        3.0 * base, rel=1e-15)


def test_mass_prefactor_and_trace_coefficient_overrides():
    m = _flat4()
    T = scalar_stress_energy("1/r", m)
    grid = GridSpec(m.chart, (5, 9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    k = _timelike(m)
    doubled = mass_integral(T, k, m, region, grid,
                            prefactor=-2.0 / (16 * math.pi))
    base = mass_integral(T, k, m, region, grid)
    assert doubled == pytest.approx(2.0 * base, rel=1e-14)
    half_trace = mass_integral(T, k, m, region, grid, trace_coefficient=0.5)
    assert half_trace != pytest.approx(base, rel=1e-6)


def test_mass_requires_timelike_direction():
    m = _shell()  # Riemannian, no timelike axis
    grid = GridSpec(m.chart, (9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    T = TensorField.from_expressions(
        m.chart, [["0"] * 3 for _ in range(3)], ("u", "u"), 0.0)
    k = TensorField.from_expressions(m.chart, ["1", "0", "0"], ("u",), 0.0)
    with pytest.raises(IntegrateError, match="timelike"):
        mass_integral(StressEnergyField(T, m), k, m, region, grid)


def test_mass_rejects_non_killing_vector():
    m = _flat4()
    T = scalar_stress_energy("1/r", m)
    grid = GridSpec(m.chart, (5, 9, 9, 8))
    region = RegionSpec(m.chart.lower, m.chart.upper)
    k = TensorField.from_expressions(m.chart, ["1", "r", "0", "0"],
                                     ("u",), 0.0)
    with pytest.raises(IntegrateError, match="hard cap"):
        mass_integral(T, k, m, region, grid)
