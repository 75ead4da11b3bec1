"""Tensor-density transformation under explicit coordinate changes.

A chart map carries user-supplied forward and inverse component
expressions, so every Jacobian is exact symbolic differentiation; no
numerical inversion happens anywhere.  A density of weight w picks up
the factor |del x / del x'|^w on top of the ordinary Jacobian factors,
with the old-over-new orientation of the determinant.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import expr as ex
from .fields import TensorField, UP
from .metric import MetricField, _sym_det

__all__ = [
    "ChartMap",
    "DensityError",
    "transform_density",
    "transform_metric",
    "determinant_weight_check",
    "DeterminantWeightReport",
    "normalize_weight",
    "restore_weight",
]


class DensityError(ValueError):
    pass


class ChartMap:
    """Invertible change of coordinates between two charts of equal dimension.

    ``forward`` gives the target coordinates as expressions over the
    source chart; ``inverse`` gives the source coordinates over the
    target chart.  Round-trip identity and Jacobian regularity are
    validated on random sample points at construction.
    """

    __slots__ = ("source", "target", "forward", "inverse",
                 "jac_forward", "jac_inverse", "jac_forward_on_target",
                 "det_inverse")

    def __init__(self, source, target, forward, inverse,
                 roundtrip_tolerance=1e-10, samples=100, seed=23):
        if source.dim != target.dim:
            raise DensityError("source and target charts must share a dimension")
        self.source = source
        self.target = target
        self.forward = [_map_expr(e, source) for e in forward]
        self.inverse = [_map_expr(e, target) for e in inverse]
        if len(self.forward) != source.dim or len(self.inverse) != source.dim:
            raise DensityError("need one forward and one inverse expression per axis")
        d = source.dim
        self.jac_forward = [
            [ex.differentiate(self.forward[i], source.names[j]) for j in range(d)]
            for i in range(d)
        ]
        self.jac_inverse = [
            [ex.differentiate(self.inverse[i], target.names[j]) for j in range(d)]
            for i in range(d)
        ]
        pullback = dict(zip(source.names, self.inverse))
        self.jac_forward_on_target = [
            [ex.substitute(self.jac_forward[i][j], pullback) for j in range(d)]
            for i in range(d)
        ]
        self.det_inverse = _sym_det(self.jac_inverse, list(range(d)), list(range(d)))
        self._validate(roundtrip_tolerance, samples, seed)

    @property
    def dim(self):
        return self.source.dim

    def _validate(self, tolerance, samples, seed):
        pts = self.target.random_points(samples, rng=seed)
        env = self.target.env_from_points(pts)
        source_pts = np.stack(
            [ex.evaluate(e, env) for e in self.inverse], axis=-1
        )
        env_src = self.source.env_from_points(source_pts)
        roundtrip = np.stack(
            [ex.evaluate(e, env_src) for e in self.forward], axis=-1
        )
        worst = float(np.max(np.abs(roundtrip - pts)))
        if worst > tolerance:
            raise DensityError(
                f"forward(inverse(x')) deviates from identity by {worst:.3e}"
            )
        det = ex.evaluate(self.det_inverse, env)
        if np.any(np.abs(det) < 1e-13):
            raise DensityError("Jacobian determinant vanishes at a sample point")

    def map_to_source(self, target_points):
        env = self.target.env_from_points(target_points)
        return np.stack([ex.evaluate(e, env) for e in self.inverse], axis=-1)

    def pull_back(self, e):
        """Compose a source-chart expression with the inverse map."""
        return ex.substitute(e, dict(zip(self.source.names, self.inverse)))


def _map_expr(e, chart):
    if isinstance(e, str):
        return ex.parse(e, symbols=chart.names)
    if isinstance(e, ex.Expr):
        return e
    if isinstance(e, (int, float)):
        return ex.const(e)
    raise DensityError(f"cannot interpret map component {e!r}")


def transform_density(t, chart_map):
    """Transform a tensor density to the target chart.

    Each up slot contracts with the forward Jacobian, each down slot
    with the inverse Jacobian, and the whole object is scaled by
    |del x / del x'|^w.  Weight 0 is the ordinary tensor law.
    """
    if not t.is_analytic:
        raise DensityError("only expression-backed fields can be transformed")
    if t.chart != chart_map.source:
        raise DensityError("field chart does not match the map's source chart")
    d = chart_map.dim
    comp = t.expressions
    pulled = np.empty_like(comp)
    for idx in np.ndindex(comp.shape) if t.rank else [()]:
        pulled[idx] = chart_map.pull_back(comp[idx])
    if t.weight == 0.0:
        jac_weight = ex.ONE
    else:
        jac_weight = ex.powc(ex.fun("abs", chart_map.det_inverse), t.weight)
    out = np.empty_like(comp)
    jf = chart_map.jac_forward_on_target
    ji = chart_map.jac_inverse
    for tgt in product(range(d), repeat=t.rank):
        terms = []
        for src in product(range(d), repeat=t.rank):
            factor = pulled[src]
            for slot, ud in enumerate(t.indices):
                jac = jf[tgt[slot]][src[slot]] if ud == UP else ji[src[slot]][tgt[slot]]
                factor = ex.mul(jac, factor)
            terms.append(factor)
        out[tgt] = ex.mul(jac_weight, ex.esum(terms))
    return TensorField(chart_map.target, t.indices, t.weight, exprs=out)


def transform_metric(m, chart_map):
    """Metric components transformed as an ordinary down-down tensor."""
    if m.chart != chart_map.source:
        raise DensityError("metric chart does not match the map's source chart")
    moved = transform_density(m.as_tensor_field(), chart_map)
    comp = moved.expressions
    table = [[comp[i, j] for j in range(chart_map.dim)]
             for i in range(chart_map.dim)]
    return MetricField(chart_map.target, table, signature=m.signature,
                       eps_det=m.eps_det)


@dataclass
class DeterminantWeightReport:
    """Deviation between the transformed determinant and its weight law."""

    max_relative_deviation: float
    samples: int


def determinant_weight_check(m, chart_map, *, samples=100, seed=29):
    """Check g' = |del x / del x'|^2 g on random target-chart points."""
    transformed = transform_metric(m, chart_map)
    pts = chart_map.target.random_points(samples, rng=seed)
    env = chart_map.target.env_from_points(pts)
    g_prime = np.abs(ex.evaluate(transformed.det_expr, env))
    jac = np.abs(ex.evaluate(chart_map.det_inverse, env))
    source_pts = chart_map.map_to_source(pts)
    g_src = m.at(source_pts, validate_signature=False).det
    predicted = jac**2 * g_src
    denom = np.maximum(np.maximum(np.abs(g_prime), np.abs(predicted)), 1e-300)
    deviation = float(np.max(np.abs(g_prime - predicted) / denom))
    return DeterminantWeightReport(max_relative_deviation=deviation,
                                   samples=samples)


def normalize_weight(t, m):
    """Strip the density weight: multiply by sqrt(g)^(-w), set w = 0."""
    return _reweight(t, m, 0.0)


def restore_weight(t, m, weight):
    """Inverse of :func:`normalize_weight`: multiply by sqrt(g)^w."""
    if t.weight != 0.0:
        raise DensityError("restore_weight expects a weight-0 field")
    return _reweight(t, m, float(weight))


def _reweight(t, m, new_weight):
    if t.chart != m.chart:
        raise DensityError("field chart does not match metric chart")
    delta = new_weight - t.weight
    if delta == 0.0:
        return t
    if t.is_analytic:
        factor = ex.powc(m.sqrtg_expr, delta)
        out = t.map_components(lambda c: ex.mul(factor, c))
    else:
        grid = t.grid
        factor_vals = m.grid_data(grid).sqrtg**delta
        reshaped = factor_vals.reshape(factor_vals.shape + (1,) * t.rank)
        out = t.map_components(lambda v: v * reshaped)
    return out.with_weight(new_weight)
