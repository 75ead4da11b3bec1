"""Structured lattices over coordinate charts and finite-difference stencils.

A chart fixes names, bounds, and periodicity of the coordinates; a grid
spec lays a uniform lattice over it.  Sampled fields are dense arrays
over that lattice (grid axes first, component axes last).  Everything
here is immutable after construction and pure, so fields can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import kernels

__all__ = [
    "CoordinateChart",
    "GridSpec",
    "SampledField",
    "partial_derivative",
    "sample",
    "convergence_rate",
    "calibrated_tolerance",
    "GridError",
]

MAX_DIM = 4


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class CoordinateChart:
    """Names, bounds, and periodicity of the coordinates."""

    names: tuple
    lower: tuple
    upper: tuple
    periodic: tuple

    def __init__(self, names, lower, upper, periodic=None):
        names = tuple(str(n) for n in names)
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        if periodic is None:
            periodic = (False,) * len(names)
        periodic = tuple(bool(p) for p in periodic)
        if not (len(names) == len(lower) == len(upper) == len(periodic)):
            raise GridError("names, lower, upper, periodic must have equal length")
        if not 1 <= len(names) <= MAX_DIM:
            raise GridError(f"chart dimension must be 1..{MAX_DIM}, got {len(names)}")
        if len(set(names)) != len(names):
            raise GridError("coordinate names must be distinct")
        for name in names:
            if name == "pi" or name in ex.FUNCTION_NAMES:
                raise GridError(f"coordinate name '{name}' shadows a builtin")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not lo < hi:
                raise GridError(f"axis {i} ('{names[i]}'): lower bound must be below upper")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "periodic", periodic)

    @property
    def dim(self):
        return len(self.names)

    def axis_index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise GridError(f"no coordinate named '{name}'") from None

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def random_points(self, n, rng=None, margin=0.0):
        """Uniform interior sample; ``margin`` shrinks each axis range."""
        if rng is None:
            rng = np.random.default_rng(0)
        elif isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        span = hi - lo
        lo = lo + margin * span
        hi = hi - margin * span
        return rng.uniform(lo, hi, size=(n, self.dim))

    def env_from_points(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[-1] != self.dim:
            raise GridError(
                f"points have {pts.shape[-1]} coordinates, chart has {self.dim}"
            )
        return {name: pts[..., i] for i, name in enumerate(self.names)}


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice over a chart.

    Non-periodic axes include both endpoints (n nodes, spacing
    (hi-lo)/(n-1)); periodic axes cover [lo, hi) with n nodes and
    spacing (hi-lo)/n.
    """

    chart: CoordinateChart
    points_per_axis: tuple
    _mesh: tuple = field(default=None, repr=False, compare=False)

    def __init__(self, chart, points_per_axis):
        points = tuple(int(n) for n in points_per_axis)
        if len(points) != chart.dim:
            raise GridError("points_per_axis length must equal chart dimension")
        for i, n in enumerate(points):
            if n < 5:
                raise GridError(f"axis {i}: need at least 5 points, got {n}")
        object.__setattr__(self, "chart", chart)
        object.__setattr__(self, "points_per_axis", points)
        object.__setattr__(self, "_mesh", None)

    @property
    def dim(self):
        return self.chart.dim

    @property
    def shape(self):
        return self.points_per_axis

    @property
    def num_points(self):
        return int(np.prod(self.points_per_axis))

    def spacing(self, axis):
        lo, hi = self.chart.lower[axis], self.chart.upper[axis]
        n = self.points_per_axis[axis]
        return (hi - lo) / n if self.chart.periodic[axis] else (hi - lo) / (n - 1)

    @property
    def spacings(self):
        return tuple(self.spacing(i) for i in range(self.dim))

    def axis_coordinates(self, axis):
        lo, hi = self.chart.lower[axis], self.chart.upper[axis]
        n = self.points_per_axis[axis]
        if self.chart.periodic[axis]:
            return lo + (hi - lo) / n * np.arange(n)
        return np.linspace(lo, hi, n)

    def meshgrid(self):
        if self._mesh is None:
            axes = [self.axis_coordinates(i) for i in range(self.dim)]
            mesh = tuple(np.meshgrid(*axes, indexing="ij"))
            object.__setattr__(self, "_mesh", mesh)
        return self._mesh

    def env(self):
        mesh = self.meshgrid()
        return {name: mesh[i] for i, name in enumerate(self.chart.names)}

    def points(self):
        mesh = self.meshgrid()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def index_near(self, axis, value, tol_factor=1e-6):
        """Lattice index whose coordinate matches ``value`` on ``axis``."""
        coords = self.axis_coordinates(axis)
        idx = int(np.argmin(np.abs(coords - value)))
        if abs(coords[idx] - value) > tol_factor * self.spacing(axis):
            raise GridError(
                f"value {value} does not lie on a lattice plane of axis {axis}"
            )
        return idx


class SampledField:
    """Dense array over a lattice: shape = grid shape + component shape."""

    __slots__ = ("grid", "values", "component_shape")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        gshape = grid.shape
        if values.shape[: len(gshape)] != gshape:
            raise GridError(
                f"values shape {values.shape} does not start with grid shape {gshape}"
            )
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise GridError(
                f"non-finite value at lattice index {tuple(int(i) for i in bad)}"
            )
        values = values.copy()
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.component_shape = values.shape[len(gshape):]

    @property
    def chart(self):
        return self.grid.chart


def partial_derivative(f, axis, order=4):
    """Finite-difference derivative of a sampled field along a grid axis.

    Central stencils of the requested order in the interior, one-sided
    stencils of the same order at non-periodic boundaries, wrap-around
    on periodic axes.
    """
    if order not in (2, 4):
        raise GridError(f"stencil order must be 2 or 4, got {order}")
    grid = f.grid
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for {grid.dim}-dimensional grid")
    n = grid.points_per_axis[axis]
    if n < order + 1:
        raise GridError(
            f"axis {axis} has {n} points; order-{order} stencil needs {order + 1}"
        )
    out = kernels.diff_axis(
        f.values, axis, grid.spacing(axis), order, grid.chart.periodic[axis]
    )
    return SampledField(grid, out)


def sample(expr_field, grid):
    """Evaluate an analytic field on every lattice node.

    ``expr_field`` is an expression (or source string), or a nested
    sequence of them for multi-component fields.
    """
    env = grid.env()
    comp = np.asarray(_as_expr_array(expr_field, grid.chart), dtype=object)
    out = np.empty(grid.shape + comp.shape)
    for idx in np.ndindex(comp.shape) if comp.shape else [()]:
        vals = ex.evaluate(comp[idx], env)
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise GridError(
                f"expression evaluated to a non-finite value at lattice index "
                f"{tuple(int(i) for i in bad)} (component {idx})"
            )
        out[(...,) + idx] = vals
    return SampledField(grid, out)


def _as_expr_array(value, chart):
    if isinstance(value, str):
        return ex.parse(value, symbols=chart.names)
    if isinstance(value, ex.Expr):
        return value
    if isinstance(value, (int, float)):
        return ex.const(value)
    return [_as_expr_array(v, chart) for v in value]


def convergence_rate(errors, spacings):
    """Least-squares slope of log(error) against log(h)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if e.size != h.size or e.size < 2:
        raise GridError("need matching error/spacing sequences of length >= 2")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def calibrated_tolerance(err_coarse, h_coarse, h_fine, order, floor=1e-10, safety=4.0):
    """Tolerance model max(floor, C*h^order) with C fit from a coarse run."""
    c = err_coarse / h_coarse**order
    return max(floor, safety * c * h_fine**order)
