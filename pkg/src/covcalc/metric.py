"""Metric fields: determinant, inverse, sqrt(det), signature, presets.

The determinant is tracked as an absolute value, with the sign carried
separately by the declared signature (count of negative and positive
eigenvalues), so sqrt(g) stays real for Lorentzian metrics.  Analytic
metrics expose exact symbolic inverses (adjugate over determinant) and
derivatives; sample-backed metrics fall back to batched linear algebra
and finite differences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import kernels
from .fields import TensorField
from .grid import CoordinateChart, SampledField

__all__ = [
    "MetricField",
    "MetricPointData",
    "MetricScalars",
    "MetricError",
    "metric_at",
    "preset",
    "minkowski4",
    "polar2",
    "spherical3",
    "static_spherical",
    "schwarzschild",
    "DEFAULT_EPS_DET",
]

DEFAULT_EPS_DET = 1e-12


class MetricError(ValueError):
    pass


@dataclass
class MetricPointData:
    """Metric quantities evaluated on a batch of points (or a lattice).

    ``g``/``ginv`` have two trailing matrix axes, ``dg`` has trailing
    (i, j, l) with l the derivative axis, ``det`` is the absolute
    determinant.  ``provenance`` records the derivative channel.
    """

    g: np.ndarray
    ginv: np.ndarray
    det: np.ndarray
    sqrtg: np.ndarray
    dg: np.ndarray
    dsqrtg: np.ndarray
    provenance: str = "analytic"


@dataclass
class MetricScalars:
    """Component-wise metric data for the index machinery.

    Entries are either expressions (analytic channel) or lattice arrays
    (grid channel); ``diff`` differentiates any such scalar along a
    coordinate axis in the matching channel.
    """

    chart: CoordinateChart
    g: list
    ginv: list
    sqrtg: object
    dg: list
    dsqrtg: list
    diff: callable
    analytic: bool
    grid: object = None
    data: object = None
    gamma: list = None  # filled lazily by the calculus module


def _perm_sign(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, cycle = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            cycle += 1
        if cycle % 2 == 0:
            sign = -sign
    return sign


def _sym_det(entries, rows, cols):
    """Determinant of the submatrix entries[rows][cols] over expressions."""
    if len(rows) == 1:
        return entries[rows[0]][cols[0]]
    terms = []
    for perm in itertools.permutations(range(len(rows))):
        sign = _perm_sign(perm)
        prod = ex.ONE
        for r, p in enumerate(perm):
            prod = ex.mul(prod, entries[rows[r]][cols[p]])
        terms.append(ex.mul(ex.const(sign), prod))
    return ex.esum(terms)


class MetricField:
    """Symmetric metric over a chart with declared signature."""

    __slots__ = ("chart", "signature", "eps_det", "_exprs", "_samples", "_cache")

    def __init__(self, chart, components=None, signature=None, *, samples=None,
                 eps_det=DEFAULT_EPS_DET, validate=True):
        if signature is None:
            raise MetricError("metric needs a declared signature (n_negative, n_positive)")
        n_neg, n_pos = int(signature[0]), int(signature[1])
        if n_neg + n_pos != chart.dim or min(n_neg, n_pos) < 0:
            raise MetricError(
                f"signature {signature} incompatible with dimension {chart.dim}"
            )
        if chart.dim < 2:
            raise MetricError("metrics need a chart of dimension >= 2")
        self.chart = chart
        self.signature = (n_neg, n_pos)
        self.eps_det = float(eps_det)
        self._cache = {}
        if (components is None) == (samples is None):
            raise MetricError("exactly one of components/samples must be given")
        if components is not None:
            d = chart.dim
            raw = list(components)
            if len(raw) != d or any(len(row) != d for row in raw):
                raise MetricError(f"component table must be {d}x{d}")
            comp = [[None] * d for _ in range(d)]
            for i in range(d):
                for j in range(i, d):
                    # storage is the symmetric part: the upper triangle is
                    # authoritative and mirrored into the lower
                    comp[i][j] = comp[j][i] = _to_expr(raw[i][j], chart)
            self._exprs = comp
            self._samples = None
        else:
            self._exprs = None
            self._samples = samples
        if validate:
            self._validate_probe()

    @classmethod
    def from_samples(cls, grid, values, signature, **kw):
        values = np.asarray(values, dtype=float)
        want = grid.shape + (grid.dim, grid.dim)
        if values.shape != want:
            raise MetricError(f"values shape {values.shape}, expected {want}")
        values = 0.5 * (values + np.swapaxes(values, -1, -2))
        return cls(grid.chart, signature=signature,
                   samples=SampledField(grid, values), **kw)

    # -- structure ----------------------------------------------------

    @property
    def dim(self):
        return self.chart.dim

    @property
    def is_analytic(self):
        return self._exprs is not None

    @property
    def det_sign(self):
        return -1.0 if self.signature[0] % 2 else 1.0

    @property
    def component_exprs(self):
        if self._exprs is None:
            raise MetricError("metric is sample-backed, no expressions available")
        return self._exprs

    @property
    def samples(self):
        if self._samples is None:
            raise MetricError("metric is expression-backed, no samples attached")
        return self._samples

    def _validate_probe(self, n=32, seed=7):
        if self.is_analytic:
            pts = self.chart.random_points(n, rng=seed)
            self.at(pts)
        else:
            grid = self._samples.grid
            vals = self._samples.values.reshape(-1, self.dim, self.dim)
            stride = max(1, vals.shape[0] // n)
            self._check_matrices(vals[::stride])

    # -- symbolic quantities -------------------------------------------

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def det_expr(self):
        """Signed determinant of the component matrix."""
        rows = list(range(self.dim))
        return self._cached("det", lambda: _sym_det(self.component_exprs, rows, rows))

    @property
    def abs_det_expr(self):
        sign = self.det_sign
        return self._cached("absdet", lambda: ex.mul(ex.const(sign), self.det_expr))

    @property
    def sqrtg_expr(self):
        return self._cached("sqrtg", lambda: ex.fun("sqrt", self.abs_det_expr))

    @property
    def inverse_exprs(self):
        def build():
            d = self.dim
            g = self.component_exprs
            det = self.det_expr
            inv = [[None] * d for _ in range(d)]
            for i in range(d):
                for j in range(i, d):
                    rows = [r for r in range(d) if r != j]
                    cols = [c for c in range(d) if c != i]
                    minor = _sym_det(g, rows, cols) if d > 1 else ex.ONE
                    cof = ex.mul(ex.const((-1.0) ** (i + j)), minor)
                    inv[i][j] = inv[j][i] = ex.div(cof, det)
            return inv
        return self._cached("inv", build)

    @property
    def dg_exprs(self):
        def build():
            d = self.dim
            g = self.component_exprs
            names = self.chart.names
            out = [[[None] * d for _ in range(d)] for _ in range(d)]
            for i in range(d):
                for j in range(i, d):
                    for l in range(d):
                        e = ex.differentiate(g[i][j], names[l])
                        out[i][j][l] = out[j][i][l] = e
            return out
        return self._cached("dg", build)

    @property
    def dsqrtg_exprs(self):
        def build():
            s = self.sqrtg_expr
            return [ex.differentiate(s, name) for name in self.chart.names]
        return self._cached("dsqrtg", build)

    def sqrt_det_field(self, power=1.0):
        """sqrt(g)^power as a scalar density of weight ``power``."""
        e = ex.powc(self.sqrtg_expr, power)
        return TensorField(self.chart, (), float(power),
                           exprs=_scalar_obj(e))

    # -- evaluation ----------------------------------------------------

    def at(self, points, validate_signature=True):
        """Metric data at arbitrary points (analytic metrics only)."""
        env = self.chart.env_from_points(points)
        d = self.dim
        shape = next(iter(env.values())).shape
        g = np.empty(shape + (d, d))
        comp = self.component_exprs
        for i in range(d):
            for j in range(i, d):
                g[..., i, j] = g[..., j, i] = ex.evaluate(comp[i][j], env)
        ginv, det, sqrtg = self._check_matrices(g.reshape(-1, d, d), validate_signature)
        dg = np.empty(shape + (d, d, d))
        dge = self.dg_exprs
        for i in range(d):
            for j in range(i, d):
                for l in range(d):
                    dg[..., i, j, l] = dg[..., j, i, l] = ex.evaluate(dge[i][j][l], env)
        dsqrtg = np.empty(shape + (d,))
        for l in range(d):
            dsqrtg[..., l] = ex.evaluate(self.dsqrtg_exprs[l], env)
        return MetricPointData(
            g=g,
            ginv=ginv.reshape(shape + (d, d)),
            det=det.reshape(shape),
            sqrtg=sqrtg.reshape(shape),
            dg=dg,
            dsqrtg=dsqrtg,
            provenance="analytic",
        )

    def _check_matrices(self, gflat, validate_signature=True):
        det_signed = np.linalg.det(gflat)
        det = np.abs(det_signed)
        bad = det <= self.eps_det
        if np.any(bad):
            where = int(np.argmax(bad))
            raise MetricError(
                f"degenerate metric: |det| = {det[where]:.3e} <= {self.eps_det:g}"
            )
        if validate_signature:
            eig = np.linalg.eigvalsh(gflat)
            n_neg = int(np.max(np.sum(eig < 0.0, axis=1)))
            n_neg_min = int(np.min(np.sum(eig < 0.0, axis=1)))
            if n_neg != self.signature[0] or n_neg_min != self.signature[0]:
                raise MetricError(
                    f"eigenvalue signs do not match declared signature {self.signature}"
                )
        ginv = np.linalg.inv(gflat)
        return ginv, det, np.sqrt(det)

    def grid_data(self, grid, derivatives=None, order=4):
        """Metric data over a full lattice.

        ``derivatives`` selects the channel for metric gradients:
        'analytic' (exact, sampled from the symbolic derivative) or
        'fd' (stencils).  Sample-backed metrics always use 'fd'.
        """
        d = self.dim
        if self.is_analytic:
            if derivatives is None:
                derivatives = "analytic"
            if derivatives == "analytic":
                data = self.at(grid.points(), validate_signature=False)
                shape = grid.shape
                return MetricPointData(
                    g=data.g.reshape(shape + (d, d)),
                    ginv=data.ginv.reshape(shape + (d, d)),
                    det=data.det.reshape(shape),
                    sqrtg=data.sqrtg.reshape(shape),
                    dg=data.dg.reshape(shape + (d, d, d)),
                    dsqrtg=data.dsqrtg.reshape(shape + (d,)),
                    provenance="analytic",
                )
            if derivatives != "fd":
                raise MetricError("derivatives channel must be 'analytic' or 'fd'")
            env = grid.env()
            g = np.empty(grid.shape + (d, d))
            comp = self.component_exprs
            for i in range(d):
                for j in range(i, d):
                    g[..., i, j] = g[..., j, i] = ex.evaluate(comp[i][j], env)
        else:
            if self._samples.grid != grid:
                raise MetricError("metric is sampled on a different grid")
            if derivatives == "analytic":
                raise MetricError("sample-backed metric has no analytic channel")
            g = self._samples.values
        ginv, det, sqrtg = self._check_matrices(
            g.reshape(-1, d, d), validate_signature=False
        )
        shape = grid.shape
        ginv = ginv.reshape(shape + (d, d))
        det = det.reshape(shape)
        sqrtg = sqrtg.reshape(shape)
        dg = np.empty(shape + (d, d, d))
        for i in range(d):
            for j in range(i, d):
                for l in range(d):
                    der = kernels.diff_axis(
                        g[..., i, j], l, grid.spacing(l), order,
                        grid.chart.periodic[l],
                    )
                    dg[..., i, j, l] = dg[..., j, i, l] = der
        dsqrtg = np.empty(shape + (d,))
        for l in range(d):
            dsqrtg[..., l] = kernels.diff_axis(
                sqrtg, l, grid.spacing(l), order, grid.chart.periodic[l]
            )
        return MetricPointData(g=g, ginv=ginv, det=det, sqrtg=sqrtg, dg=dg,
                               dsqrtg=dsqrtg, provenance="fd")

    # -- scalars for the index machinery --------------------------------

    def scalars(self, grid=None, derivatives=None, order=4):
        d = self.dim
        if grid is None:
            if not self.is_analytic:
                raise MetricError(
                    "sample-backed metric needs a grid for evaluation"
                )
            names = self.chart.names
            return MetricScalars(
                chart=self.chart,
                g=self.component_exprs,
                ginv=self.inverse_exprs,
                sqrtg=self.sqrtg_expr,
                dg=self.dg_exprs,
                dsqrtg=self.dsqrtg_exprs,
                diff=lambda s, ax: ex.differentiate(s, names[ax]),
                analytic=True,
            )
        data = self.grid_data(grid, derivatives=derivatives, order=order)
        g = [[data.g[..., i, j] for j in range(d)] for i in range(d)]
        ginv = [[data.ginv[..., i, j] for j in range(d)] for i in range(d)]
        dg = [[[data.dg[..., i, j, l] for l in range(d)] for j in range(d)]
              for i in range(d)]
        dsqrtg = [data.dsqrtg[..., l] for l in range(d)]

        def diff(arr, ax):
            return kernels.diff_axis(
                arr, ax, grid.spacing(ax), order, grid.chart.periodic[ax]
            )

        return MetricScalars(chart=self.chart, g=g, ginv=ginv, sqrtg=data.sqrtg,
                             dg=dg, dsqrtg=dsqrtg, diff=diff, analytic=False,
                             grid=grid, data=data)

    def as_tensor_field(self):
        """The metric components as an ordinary down-down tensor field."""
        return TensorField.from_expressions(
            self.chart, [list(row) for row in self.component_exprs],
            indices=("d", "d"), weight=0.0,
        )


def metric_at(m, points, validate_signature=True):
    """Metric data (components, inverse, |det|, sqrt, gradients) at points."""
    return m.at(points, validate_signature=validate_signature)


def _scalar_obj(e):
    comp = np.empty((), dtype=object)
    comp[()] = e
    return comp


def _to_expr(value, chart):
    if isinstance(value, str):
        return ex.parse(value, symbols=chart.names)
    if isinstance(value, ex.Expr):
        return value
    if isinstance(value, (int, float)):
        return ex.const(value)
    raise MetricError(f"cannot interpret metric component of type {type(value).__name__}")


# ---------------------------------------------------------------------------
# Preset spacetimes
# ---------------------------------------------------------------------------

def _chart(names, lower, upper, periodic, overrides):
    lower = list(overrides.get("lower", lower))
    upper = list(overrides.get("upper", upper))
    periodic = list(overrides.get("periodic", periodic))
    return CoordinateChart(names, lower, upper, periodic)


def _require(cond, message):
    if not cond:
        raise MetricError(message)


def minkowski4(**overrides):
    chart = _chart(("t", "x", "y", "z"), [0.0] * 4, [1.0] * 4, [False] * 4, overrides)
    comp = [["-1", "0", "0", "0"],
            ["0", "1", "0", "0"],
            ["0", "0", "1", "0"],
            ["0", "0", "0", "1"]]
    return MetricField(chart, comp, signature=(1, 3))


def polar2(**overrides):
    chart = _chart(("r", "theta"), [1.0, 0.0], [2.0, 2.0 * math.pi],
                   [False, True], overrides)
    _require(chart.lower[0] > 0.0, "polar chart must exclude r = 0")
    comp = [["1", "0"], ["0", "r^2"]]
    return MetricField(chart, comp, signature=(0, 2))


def spherical3(**overrides):
    chart = _chart(("r", "theta", "phi"),
                   [1.0, 0.1, 0.0],
                   [2.0, math.pi - 0.1, 2.0 * math.pi],
                   [False, False, True], overrides)
    _require(chart.lower[0] > 0.0, "spherical chart must exclude r = 0")
    _require(0.0 < chart.lower[1] and chart.upper[1] < math.pi,
             "spherical chart must exclude the polar axis (sin(theta) = 0)")
    comp = [["1", "0", "0"],
            ["0", "r^2", "0"],
            ["0", "0", "r^2*sin(theta)^2"]]
    return MetricField(chart, comp, signature=(0, 3))


def _static_spherical_from_squares(alpha_sq, a_sq, overrides):
    chart = _chart(("t", "r", "theta", "phi"),
                   [0.0, 1.0, 0.1, 0.0],
                   [1.0, 2.0, math.pi - 0.1, 2.0 * math.pi],
                   [False, False, False, True], overrides)
    _require(chart.lower[1] > 0.0, "chart must exclude r = 0")
    _require(0.0 < chart.lower[2] and chart.upper[2] < math.pi,
             "chart must exclude the polar axis (sin(theta) = 0)")
    zero = ex.ZERO
    comp = [[ex.neg(alpha_sq), zero, zero, zero],
            [zero, a_sq, zero, zero],
            [zero, zero, ex.parse("r^2", chart.names), zero],
            [zero, zero, zero, ex.parse("r^2*sin(theta)^2", chart.names)]]
    return MetricField(chart, comp, signature=(1, 3))


def static_spherical(alpha="1", a="1", **overrides):
    """Static spherically symmetric line element with lapse-like factors.

    ds^2 = -alpha^2 dt^2 + a^2 dr^2 + r^2 dtheta^2 + r^2 sin(theta)^2 dphi^2,
    with alpha and a expressions over the chart coordinates.
    """
    names = ("t", "r", "theta", "phi")
    alpha_e = ex.parse(alpha, names) if isinstance(alpha, str) else alpha
    a_e = ex.parse(a, names) if isinstance(a, str) else a
    return _static_spherical_from_squares(
        ex.powc(alpha_e, 2.0), ex.powc(a_e, 2.0), overrides
    )


def schwarzschild(mass=1.0, **overrides):
    """Static spherical metric with alpha^2 = 1 - 2M/r and a^2 its inverse."""
    mass = float(mass)
    _require(mass > 0.0, "mass must be positive")
    overrides.setdefault("lower", [0.0, 3.0 * mass, 0.1, 0.0])
    overrides.setdefault("upper", [1.0, 10.0 * mass, math.pi - 0.1, 2.0 * math.pi])
    _require(overrides["lower"][1] > 2.0 * mass,
             f"radial bounds must stay outside r = {2.0 * mass!r}")
    factor = f"(1-{2.0 * mass!r}/r)"
    return _static_spherical_from_squares(
        ex.parse(factor, ("t", "r", "theta", "phi")),
        ex.parse(f"1/{factor}", ("t", "r", "theta", "phi")),
        overrides,
    )


_PRESETS = {
    "minkowski4": minkowski4,
    "polar2": polar2,
    "spherical3": spherical3,
    "static_spherical": static_spherical,
    "schwarzschild": schwarzschild,
}


def preset(name, **params):
    """Construct a named preset metric; see the individual factories."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise MetricError(
            f"unknown preset '{name}' (choose from {sorted(_PRESETS)})"
        ) from None
    return factory(**params)
