"""Tensor density fields over a chart.

A field carries an ordered index signature (up/down slots), a real
density weight (weight 0 is an ordinary tensor), and components backed
either by analytic expressions or by samples on a lattice.  Analytic
fields evaluate at arbitrary points and have exact derivatives;
sampled fields live on their grid and differentiate by stencils.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .grid import SampledField, sample as grid_sample

__all__ = ["TensorField", "FieldError", "UP", "DOWN"]

UP = "u"
DOWN = "d"

_INDEX_ALIASES = {
    "u": UP, "up": UP, "contravariant": UP,
    "d": DOWN, "down": DOWN, "covariant": DOWN,
}


class FieldError(ValueError):
    pass


def _normalize_indices(indices):
    out = []
    for slot in indices:
        key = str(slot).lower()
        if key not in _INDEX_ALIASES:
            raise FieldError(f"index slot must be up or down, got {slot!r}")
        out.append(_INDEX_ALIASES[key])
    return tuple(out)


class TensorField:
    """Tensor density of weight ``w`` with an explicit index signature."""

    __slots__ = ("chart", "indices", "weight", "_exprs", "_samples")

    def __init__(self, chart, indices, weight, exprs=None, samples=None):
        if (exprs is None) == (samples is None):
            raise FieldError("exactly one of exprs/samples must be given")
        self.chart = chart
        self.indices = _normalize_indices(indices)
        self.weight = float(weight)
        if not np.isfinite(self.weight):
            raise FieldError("density weight must be finite")
        self._exprs = exprs
        self._samples = samples

    # -- constructors -------------------------------------------------

    @classmethod
    def from_expressions(cls, chart, components, indices=(), weight=0.0):
        """Build an analytic field from expressions / source strings.

        ``components`` is a single expression for a scalar or a nested
        sequence with one level per index slot, each of extent ``dim``.
        """
        indices = _normalize_indices(indices)
        comp = np.empty((chart.dim,) * len(indices), dtype=object)
        raw = np.asarray(_nested(components), dtype=object) if indices else None
        if indices:
            if raw.shape != comp.shape:
                raise FieldError(
                    f"component array shape {raw.shape} does not match "
                    f"{len(indices)} indices of extent {chart.dim}"
                )
            for idx in np.ndindex(comp.shape):
                comp[idx] = _to_expr(raw[idx], chart)
        else:
            comp = np.empty((), dtype=object)
            comp[()] = _to_expr(components, chart)
        return cls(chart, indices, weight, exprs=comp)

    @classmethod
    def from_samples(cls, grid, values, indices=(), weight=0.0):
        indices = _normalize_indices(indices)
        values = np.asarray(values, dtype=float)
        want = grid.shape + (grid.dim,) * len(indices)
        if values.shape != want:
            raise FieldError(f"values shape {values.shape}, expected {want}")
        return cls(grid.chart, indices, weight, samples=SampledField(grid, values))

    # -- structure ----------------------------------------------------

    @property
    def rank(self):
        return len(self.indices)

    @property
    def dim(self):
        return self.chart.dim

    @property
    def is_analytic(self):
        return self._exprs is not None

    @property
    def grid(self):
        return self._samples.grid if self._samples is not None else None

    @property
    def expressions(self):
        if self._exprs is None:
            raise FieldError("field is sample-backed, no expressions available")
        return self._exprs

    @property
    def samples(self):
        if self._samples is None:
            raise FieldError("field is expression-backed, no samples attached")
        return self._samples

    def __repr__(self):
        backing = "analytic" if self.is_analytic else f"sampled{self.grid.shape}"
        sig = "".join(self.indices) or "scalar"
        return f"<TensorField {sig} w={self.weight:g} {backing}>"

    # -- evaluation ---------------------------------------------------

    def at(self, points):
        """Component values at arbitrary points (analytic fields only).

        Returns shape ``(npoints,) + (dim,)*rank``.
        """
        comp = self.expressions
        env = self.chart.env_from_points(points)
        npts = next(iter(env.values())).shape if env else ()
        out = np.empty(npts + comp.shape)
        for idx in np.ndindex(comp.shape):
            out[(...,) + idx] = ex.evaluate(comp[idx], env)
        return out

    def sample(self, grid):
        """Sampled copy of an analytic field on ``grid``."""
        if grid.chart != self.chart:
            raise FieldError("grid chart does not match field chart")
        sampled = grid_sample(self.expressions.tolist() if self.rank else
                              self.expressions[()], grid)
        return TensorField(self.chart, self.indices, self.weight,
                           samples=sampled)

    def values_on(self, grid):
        """Component values over a full lattice, for either backing."""
        if self._samples is not None:
            if self._samples.grid != grid:
                raise FieldError("field is sampled on a different grid")
            return self._samples.values
        return self.sample(grid).samples.values

    def max_abs_at(self, points):
        return float(np.max(np.abs(self.at(points))))

    # -- component-level helpers (used by the calculus machinery) -----

    def component_scalars(self, grid=None):
        """Components as an object array of expressions or lattice arrays."""
        if grid is None:
            return self.expressions
        values = self.values_on(grid)
        comp = np.empty((self.dim,) * self.rank, dtype=object)
        for idx in np.ndindex(comp.shape):
            comp[idx] = values[(...,) + idx]
        if self.rank == 0:
            comp = np.empty((), dtype=object)
            comp[()] = values
        return comp

    def map_components(self, fn):
        """New field with ``fn`` applied to every component scalar."""
        if self._exprs is not None:
            comp = np.empty_like(self._exprs)
            for idx in np.ndindex(comp.shape) if self.rank else [()]:
                comp[idx] = fn(self._exprs[idx])
            return TensorField(self.chart, self.indices, self.weight, exprs=comp)
        values = fn(self._samples.values)
        return TensorField(self.chart, self.indices, self.weight,
                           samples=SampledField(self.grid, values))

    def scaled(self, factor):
        """Field multiplied by a constant."""
        factor = float(factor)
        if self._exprs is not None:
            return self.map_components(lambda c: ex.mul(ex.const(factor), c))
        return self.map_components(lambda v: factor * v)

    def with_weight(self, weight):
        out = TensorField(self.chart, self.indices, weight,
                          exprs=self._exprs, samples=self._samples)
        return out


def _nested(value):
    if isinstance(value, np.ndarray) and value.dtype == object:
        return value
    if isinstance(value, (list, tuple)):
        return [_nested(v) for v in value]
    return value


def _to_expr(value, chart):
    if isinstance(value, str):
        return ex.parse(value, symbols=chart.names)
    if isinstance(value, ex.Expr):
        unknown = ex.symbols_of(value) - set(chart.names)
        if unknown:
            raise FieldError(f"expression uses symbols outside the chart: {sorted(unknown)}")
        return value
    if isinstance(value, (int, float)):
        return ex.const(value)
    raise FieldError(f"cannot interpret component of type {type(value).__name__}")
