"""Proper-volume and proper-surface quadrature over coordinate boxes.

Regions are axis-aligned boxes whose faces sit on lattice planes.  The
volume measure is sqrt(g) times the coordinate element; on a face
normal to axis mu the product of unit conormal and induced area
density reduces to (sign) sqrt(g) times the remaining coordinate
differentials, which is what the face quadrature uses.  A periodic
axis whose region spans the full period has no boundary faces and
integrates with equal weights.

Only scalar fields enter volume integrals and only vector fields cross
surfaces; free-index tensors have no flux operation here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .calculus import divergence_vector, killing_residual
from .fields import TensorField, UP
from .physics import StressEnergyField

__all__ = [
    "RegionSpec",
    "SurfaceElement",
    "GaussReport",
    "IntegrateError",
    "volume_integral",
    "surface_integral",
    "surface_element",
    "gauss_check",
    "mass_integral",
    "DEFAULT_MASS_PREFACTOR",
]

DEFAULT_MASS_PREFACTOR = -1.0 / (16.0 * math.pi)


class IntegrateError(ValueError):
    pass


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned coordinate box; lower faces are 'inner', upper 'outer'."""

    lower: tuple
    upper: tuple

    def __init__(self, lower, upper):
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        if len(lower) != len(upper):
            raise IntegrateError("lower/upper must have equal length")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not lo < hi:
                raise IntegrateError(f"axis {i}: region bounds must be increasing")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return len(self.lower)

    def faces(self):
        return tuple((axis, side) for axis in range(self.dim) for side in (-1, +1))

    def face_kind(self, side):
        return "inner" if side < 0 else "outer"


@dataclass
class _AxisSpan:
    start: int
    stop: int       # inclusive
    wrap: bool      # full periodic cover: all nodes, no faces

    @property
    def count(self):
        return self.stop - self.start + 1


def _region_spans(region, grid):
    chart = grid.chart
    if region.dim != grid.dim:
        raise IntegrateError("region dimension does not match grid dimension")
    spans = []
    for axis in range(grid.dim):
        lo, hi = region.lower[axis], region.upper[axis]
        span = chart.upper[axis] - chart.lower[axis]
        if lo < chart.lower[axis] - 1e-12 * span or hi > chart.upper[axis] + 1e-12 * span:
            raise IntegrateError(f"region exceeds chart bounds on axis {axis}")
        full = (abs(lo - chart.lower[axis]) <= 1e-12 * span
                and abs(hi - chart.upper[axis]) <= 1e-12 * span)
        if chart.periodic[axis] and full:
            spans.append(_AxisSpan(0, grid.points_per_axis[axis] - 1, True))
            continue
        if chart.periodic[axis] and abs(hi - chart.upper[axis]) <= 1e-12 * span:
            raise IntegrateError(
                f"axis {axis}: a partial periodic region cannot end at the "
                "period boundary (no lattice node there)"
            )
        try:
            start = grid.index_near(axis, lo)
            stop = grid.index_near(axis, hi)
        except Exception as err:
            raise IntegrateError(str(err)) from None
        if stop <= start:
            raise IntegrateError(f"axis {axis}: region too narrow for the lattice")
        spans.append(_AxisSpan(start, stop, False))
    return spans


def _axis_weights(rule, count, h, wrap):
    if wrap:
        return np.full(count, h)
    if count < 2:
        raise IntegrateError("need at least two nodes per axis")
    if rule == "trapezoid":
        w = np.full(count, h)
        w[0] = w[-1] = 0.5 * h
        return w
    if rule == "simpson":
        if count % 2 == 0:
            raise IntegrateError(
                f"Simpson rule needs an odd node count, got {count}"
            )
        w = np.full(count, 2.0 * h / 3.0)
        w[1::2] = 4.0 * h / 3.0
        w[0] = w[-1] = h / 3.0
        return w
    raise IntegrateError(f"unknown quadrature rule '{rule}'")


def _weighted_sum(values, weights):
    # serial contraction axis by axis keeps the reduction order fixed
    out = values
    for w in reversed(weights):
        out = np.tensordot(out, w, axes=([out.ndim - 1], [0]))
    return float(out)


def _submesh_env(grid, spans, fixed=None, fixed_coords=None):
    """Sub-lattice evaluation environment.

    ``fixed`` pins axes to a lattice index; ``fixed_coords`` pins axes
    to an arbitrary coordinate value (off-lattice, analytic use only).
    """
    fixed = fixed or {}
    fixed_coords = fixed_coords or {}
    axes = []
    for axis in range(grid.dim):
        if axis in fixed:
            coords = grid.axis_coordinates(axis)
            axes.append(coords[fixed[axis]:fixed[axis] + 1])
        elif axis in fixed_coords:
            axes.append(np.asarray([float(fixed_coords[axis])]))
        else:
            span = spans[axis]
            axes.append(grid.axis_coordinates(axis)[span.start:span.stop + 1])
    mesh = np.meshgrid(*axes, indexing="ij")
    env = {name: mesh[i] for i, name in enumerate(grid.chart.names)}
    shape = mesh[0].shape
    return env, shape


def _region_slicer(grid, spans, fixed):
    fixed = fixed or {}
    return tuple(
        slice(spans[a].start, spans[a].stop + 1) if a not in fixed
        else slice(fixed[a], fixed[a] + 1)
        for a in range(grid.dim)
    )


def _field_component(field, idx, grid, spans, env, shape, fixed=None):
    """One component of a field on a sub-mesh, for either backing.

    ``idx`` is the (possibly empty) component index tuple.
    """
    if field.is_analytic:
        vals = ex.evaluate(field.expressions[idx], env)
        return np.broadcast_to(vals, shape).astype(float)
    if field.grid != grid:
        raise IntegrateError("sampled field lives on a different grid")
    return field.samples.values[_region_slicer(grid, spans, fixed) + idx]


def _sqrtg_values(m, grid, spans, env, shape, fixed=None):
    if m.is_analytic:
        vals = np.sqrt(np.abs(ex.evaluate(m.det_expr, env)))
        return np.broadcast_to(vals, shape).astype(float)
    return m.grid_data(grid).sqrtg[_region_slicer(grid, spans, fixed)]


def volume_integral(f, m, region, grid, rule="trapezoid"):
    """Integral of a scalar field against the proper volume element.

    Composite trapezoid (default) or Simpson product quadrature of
    f sqrt(g) over the box; the reduction order is deterministic.
    """
    if not isinstance(f, TensorField) or f.rank != 0:
        raise IntegrateError("volume_integral accepts scalar fields only")
    if f.weight != 0.0:
        raise IntegrateError("volume integrand must have weight 0 "
                             "(the measure already carries sqrt(g))")
    spans = _region_spans(region, grid)
    env, shape = _submesh_env(grid, spans)
    vals = _field_component(f, (), grid, spans, env, shape)
    sqrtg = _sqrtg_values(m, grid, spans, env, shape)
    weights = [
        _axis_weights(rule, spans[a].count, grid.spacing(a), spans[a].wrap)
        for a in range(grid.dim)
    ]
    return _weighted_sum(vals * sqrtg, weights)


@dataclass
class SurfaceElement:
    """Oriented face data: unit conormal and scalar area density.

    The conormal is metric-normalized (g^{mn} n_m n_n = +/-1 according
    to the face's causal character); ``area_density`` is sqrt(g) at the
    face nodes, so flux integrands are P^axis * side * area_density.
    """

    axis: int
    side: int
    normal: np.ndarray
    area_density: np.ndarray
    normal_square_sign: int


def surface_element(m, grid, region, axis, side):
    spans = _region_spans(region, grid)
    if spans[axis].wrap:
        raise IntegrateError(f"axis {axis} wraps the full period: no boundary face")
    fixed_idx = spans[axis].start if side < 0 else spans[axis].stop
    env, shape = _submesh_env(grid, spans, fixed={axis: fixed_idx})
    d = grid.dim
    if m.is_analytic:
        pts = np.stack([np.broadcast_to(env[n], shape).ravel()
                        for n in grid.chart.names], axis=-1)
        data = m.at(pts, validate_signature=False)
        ginv_aa = data.ginv[:, axis, axis].reshape(shape)
        sqrtg = data.sqrtg.reshape(shape)
    else:
        data = m.grid_data(grid)
        slicer = tuple(
            slice(spans[a].start, spans[a].stop + 1) if a != axis
            else slice(fixed_idx, fixed_idx + 1)
            for a in range(d)
        )
        ginv_aa = data.ginv[slicer + (axis, axis)]
        sqrtg = data.sqrtg[slicer]
    normal = np.zeros(shape + (d,))
    normal[..., axis] = side / np.sqrt(np.abs(ginv_aa))
    sign = int(np.sign(ginv_aa.flat[0]))
    return SurfaceElement(axis=axis, side=side, normal=normal,
                          area_density=sqrtg, normal_square_sign=sign)


def surface_integral(P, m, region, grid, rule="trapezoid", faces=None,
                     orientation=+1):
    """Outward flux of a vector field through the region boundary.

    Sums over the requested faces (default: every non-periodic face);
    lower faces carry the inward-pointing coordinate direction as their
    outward normal, so the result is the net flux out of the region.
    ``orientation=-1`` reverses every face normal, negating the result
    exactly (same nodes and weights).
    """
    if not isinstance(P, TensorField) or P.indices != (UP,) or P.weight != 0.0:
        raise IntegrateError(
            "surface_integral accepts weight-0 vector fields (one up index) only"
        )
    if orientation not in (-1, +1):
        raise IntegrateError("orientation must be +1 (outward) or -1 (inward)")
    spans = _region_spans(region, grid)
    if faces is None:
        faces = [(axis, side) for axis, side in region.faces()
                 if not spans[axis].wrap]
    total = 0.0
    for axis, side in faces:
        if spans[axis].wrap:
            raise IntegrateError(
                f"axis {axis} wraps the full period: no boundary face"
            )
        fixed_idx = spans[axis].start if side < 0 else spans[axis].stop
        env, shape = _submesh_env(grid, spans, fixed={axis: fixed_idx})
        comp = _field_component(P, (axis,), grid, spans, env, shape,
                                fixed={axis: fixed_idx})
        sqrtg = _sqrtg_values(m, grid, spans, env, shape, fixed={axis: fixed_idx})
        integrand = orientation * side * comp * sqrtg
        weights = []
        for a in range(grid.dim):
            if a == axis:
                weights.append(np.ones(1))
            else:
                weights.append(_axis_weights(rule, spans[a].count,
                                             grid.spacing(a), spans[a].wrap))
        total += _weighted_sum(integrand, weights)
    return float(total)


@dataclass
class GaussReport:
    """Volume and surface sides of the divergence theorem on one region."""

    lhs: float
    rhs: float
    residual: float
    resolution: tuple
    rule: str
    channel: str
    order: int

    def as_dict(self):
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "resolution": list(self.resolution),
            "rule": self.rule,
            "channel": self.channel,
            "order": self.order,
        }


def gauss_check(P, m, region, grid, rule="trapezoid", channel="analytic",
                order=4):
    """Compare the proper-volume integral of div P with the boundary flux.

    ``channel`` picks how the divergence is produced: 'analytic'
    (exact expressions) or 'fd' (lattice stencils of ``order``).
    The residual is relative to max(1, |lhs|, |rhs|).
    """
    if channel == "analytic":
        divP = divergence_vector(P, m, route="sqrtg")
    elif channel == "fd":
        divP = divergence_vector(P, m, route="sqrtg", grid=grid,
                                 metric_derivatives="fd", order=order)
    else:
        raise IntegrateError("channel must be 'analytic' or 'fd'")
    lhs = volume_integral(divP, m, region, grid, rule=rule)
    rhs = surface_integral(P, m, region, grid, rule=rule)
    residual = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
    return GaussReport(lhs=lhs, rhs=rhs, residual=residual,
                       resolution=grid.points_per_axis, rule=rule,
                       channel=channel, order=order)


def _timelike_axis(m, region):
    if m.signature[0] != 1:
        raise IntegrateError(
            f"mass integral needs exactly one timelike direction, "
            f"signature is {m.signature}"
        )
    center = np.array([[0.5 * (lo + hi) for lo, hi in
                        zip(region.lower, region.upper)]])
    g = m.at(center, validate_signature=False).g[0] if m.is_analytic else None
    if g is None:
        vals = m.samples.values
        g = vals[tuple(s // 2 for s in vals.shape[:-2])]
    negative = [a for a in range(m.dim) if g[a, a] < 0.0]
    if len(negative) != 1:
        raise IntegrateError(
            "could not identify a unique timelike coordinate axis from the "
            "metric diagonal"
        )
    return negative[0]


def mass_integral(T, k, m, region, grid, rule="trapezoid",
                  prefactor=DEFAULT_MASS_PREFACTOR, trace_coefficient=1.0,
                  killing_tolerance=1e-8, time_value=None):
    """Total energy paired with a timelike Killing field on a t=const slice.

    M = prefactor * integral of (T^mu_nu - c delta^mu_nu T) k^nu dS_mu
    over the slice, where only the timelike component of dS contributes
    and dS carries the sqrt(g)-weighted coordinate area.  ``prefactor``
    and the trace coefficient ``c`` are configurable.
    """
    if not isinstance(T, StressEnergyField):
        T = StressEnergyField(T, m)
    if k.indices != (UP,) or k.weight != 0.0:
        raise IntegrateError("the Killing field must be an up vector of weight 0")
    taxis = _timelike_axis(m, region)
    check = killing_residual(k, m)
    if check.max_norm > killing_tolerance:
        raise IntegrateError(
            f"Killing residual {check.max_norm:.3e} exceeds the hard cap "
            f"{killing_tolerance:g}"
        )
    spans = _region_spans(region, grid)
    if time_value is None:
        time_value = region.lower[taxis]
    mixed = T.mixed
    trace = T.trace
    d = m.dim
    all_analytic = mixed.is_analytic and k.is_analytic and m.is_analytic
    if all_analytic:
        # the slice coordinate need not sit on a lattice plane
        env, shape = _submesh_env(grid, spans, fixed_coords={taxis: time_value})
        fixed = None
    else:
        fixed = {taxis: grid.index_near(taxis, time_value)}
        env, shape = _submesh_env(grid, spans, fixed=fixed)
    kvals = np.stack(
        [_field_component(k, (nu,), grid, spans, env, shape, fixed)
         for nu in range(d)], axis=-1)
    mvals = np.stack(
        [_field_component(mixed, (taxis, nu), grid, spans, env, shape, fixed)
         for nu in range(d)], axis=-1)
    tvals = _field_component(trace, (), grid, spans, env, shape, fixed)
    acc = np.einsum("...n,...n->...", mvals, kvals)
    acc -= trace_coefficient * tvals * kvals[..., taxis]
    sqrtg = _sqrtg_values(m, grid, spans, env, shape, fixed)
    integrand = acc * sqrtg
    weights = []
    for a in range(grid.dim):
        if a == taxis:
            weights.append(np.ones(1))
        else:
            weights.append(_axis_weights(rule, spans[a].count,
                                         grid.spacing(a), spans[a].wrap))
    return prefactor * _weighted_sum(integrand, weights)
