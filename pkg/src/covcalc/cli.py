"""Config-driven command line front end.

Reads a YAML config describing a chart, grid, metric (preset or
component table), optional fields, and one recipe; runs the recipe's
checks; writes a JSON-lines report (one object per check, an ``eq``
tag naming the identity each check verifies) and prints a human
summary.  Exit codes: 0 all checks pass, 1 a numerical check failed,
2 configuration or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import calculus as ca
from . import density as dn
from . import expr as ex
from . import integrate as ig
from . import metric as mt
from . import physics as ph
from .expr import ExprError
from .fields import TensorField, FieldError
from .grid import CoordinateChart, GridError, GridSpec

__all__ = ["main", "run", "ConfigError"]


class ConfigError(ValueError):
    pass


class CheckFailure(Exception):
    """A recipe could not produce a passing check (exit code 1)."""


_BUILD_ERRORS = (ConfigError, ExprError, GridError, FieldError, mt.MetricError,
                 dn.DensityError, ph.PhysicsError, ig.IntegrateError,
                 ca.CalculusError, KeyError, TypeError, yaml.YAMLError)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="covcalc",
        description="Verify covariant-calculus identities on user metrics.",
    )
    parser.add_argument("--config", required=True, help="YAML config path")
    parser.add_argument("--output", default=None, help="report directory")
    parser.add_argument("--tolerance", type=float, default=None,
                        help="override the default check tolerance")
    parser.add_argument("--resolution", type=int, default=None,
                        help="override the point count on every grid axis")
    parser.add_argument("--order", type=int, choices=(2, 4), default=None,
                        help="override the stencil order")
    args = parser.parse_args(argv)
    try:
        rows, out_dir, recipe = run(
            args.config, output=args.output, tolerance=args.tolerance,
            resolution=args.resolution, order=args.order,
        )
    except _BUILD_ERRORS as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    failed = [r for r in rows if not r["pass"]]
    for row in rows:
        status = "PASS" if row["pass"] else "FAIL"
        detail = ", ".join(
            f"{k}={row[k]:.6g}" if isinstance(row[k], float) else f"{k}={row[k]}"
            for k in sorted(row)
            if k not in ("recipe", "check", "pass")
        )
        print(f"[{status}] {row['recipe']}:{row['check']} {detail}")
    report = out_dir / f"{recipe}.jsonl"
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed "
          f"(report: {report})")
    return 1 if failed else 0


def run(config_path, output=None, tolerance=None, resolution=None, order=None):
    """Execute the recipe in ``config_path``; returns (rows, out_dir, name)."""
    path = Path(config_path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError as err:
        raise ConfigError(str(err)) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    recipe = raw.get("recipe")
    if recipe not in _RECIPES:
        raise ConfigError(
            f"recipe must be one of {sorted(_RECIPES)}, got {recipe!r}"
        )
    ctx = _Context(raw, tolerance=tolerance, resolution=resolution, order=order)
    rows = _RECIPES[recipe](ctx)
    for row in rows:
        row["recipe"] = recipe
    out_dir = Path(output) if output else Path(raw.get("output", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = out_dir / f"{recipe}.jsonl"
    with report.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return rows, out_dir, recipe


class _Context:
    """Config objects resolved once and shared by the recipe functions."""

    def __init__(self, raw, tolerance=None, resolution=None, order=None):
        self.raw = raw
        self.seed = int(raw.get("seed", 1234))
        self.order = order if order is not None else int(raw.get("order", 4))
        if self.order not in (2, 4):
            raise ConfigError("order must be 2 or 4")
        self.tolerance = (tolerance if tolerance is not None
                          else float(raw.get("tolerance", 1e-8)))
        self.resolution = resolution
        self.params = raw.get("params") or {}
        self.metric = self._build_metric()
        self.chart = self.metric.chart
        self.grid = self._build_grid()
        self.fields = {
            name: self._build_field(spec)
            for name, spec in (raw.get("fields") or {}).items()
        }

    def _chart_overrides(self):
        block = self.raw.get("chart")
        if not block:
            return {}, None
        overrides = {}
        for key in ("lower", "upper", "periodic"):
            if key in block:
                overrides[key] = list(block[key])
        return overrides, block.get("names")

    def _build_metric(self):
        block = self.raw.get("metric")
        if not block:
            raise ConfigError("config needs a metric block")
        overrides, names = self._chart_overrides()
        if "preset" in block:
            params = dict(block.get("params") or {})
            params.update(overrides)
            m = mt.preset(block["preset"], **params)
            if names and tuple(names) != m.chart.names:
                raise ConfigError(
                    f"preset '{block['preset']}' uses coordinates "
                    f"{list(m.chart.names)}, config chart names differ"
                )
            return m
        if "components" not in block or "signature" not in block:
            raise ConfigError(
                "metric block needs either a preset or components + signature"
            )
        chart_block = self.raw.get("chart")
        if not chart_block:
            raise ConfigError("an explicit metric needs a chart block")
        chart = CoordinateChart(
            chart_block["names"], chart_block["lower"], chart_block["upper"],
            chart_block.get("periodic"),
        )
        return mt.MetricField(chart, block["components"],
                              signature=tuple(block["signature"]))

    def _build_grid(self):
        block = self.raw.get("grid") or {}
        points = block.get("points")
        if points is None:
            points = [17] * self.chart.dim
        if self.resolution is not None:
            points = [self.resolution] * self.chart.dim
        return GridSpec(self.chart, points)

    def _build_field(self, spec):
        if not isinstance(spec, dict) or "components" not in spec:
            raise ConfigError("field blocks need a components entry")
        indices = spec.get("indices", [])
        if indices in ("scalar", None):
            indices = []
        weight = float(spec.get("weight", 0.0))
        return TensorField.from_expressions(
            self.chart, spec["components"], indices=indices, weight=weight,
        )

    def field(self, key, default_name=None):
        name = self.params.get(key, default_name)
        if name is None:
            raise ConfigError(f"recipe needs params.{key}")
        if name not in self.fields:
            raise ConfigError(f"no field named '{name}' in the fields block")
        return self.fields[name]

    def points(self, n=None):
        count = int(self.params.get("points", n or 500))
        return self.chart.random_points(count, rng=self.seed)

    def region(self):
        block = self.params.get("region")
        if block is None:
            return ig.RegionSpec(self.chart.lower, self.chart.upper)
        return ig.RegionSpec(block["lower"], block["upper"])

    def rule(self):
        return self.params.get("rule", "trapezoid")


def _row(check, eq, value, tolerance=None, passed=None, **extra):
    row = {"check": check, "eq": eq, "value": float(value)}
    if tolerance is not None:
        row["tolerance"] = float(tolerance)
        passed = value <= tolerance if passed is None else passed
    row["pass"] = bool(True if passed is None else passed)
    row.update(extra)
    return row


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------

def _recipe_christoffel(ctx):
    pts = ctx.points()
    gamma = ca.christoffel(ctx.metric)
    vals = gamma.at(pts)
    trace = ca.christoffel_trace(ctx.metric)
    rows = [
        _row("trace_identity", "7", trace.max_difference(pts), ctx.tolerance,
             points=len(pts)),
    ]
    d = ctx.chart.dim
    for mu in range(d):
        for a in range(d):
            for b in range(a, d):
                rows.append(_row(
                    "component_max_abs", "5",
                    float(np.max(np.abs(vals[:, mu, a, b]))),
                    indices=[mu, a, b],
                ))
    return rows


def _recipe_divergence(ctx):
    P = ctx.field("vector", "P")
    pts = ctx.points()
    v1 = ca.divergence_vector(P, ctx.metric, "christoffel").at(pts)
    v2 = ca.divergence_vector(P, ctx.metric, "sqrtg").at(pts)
    rel = np.max(np.abs(v1 - v2) / np.maximum(1.0, np.abs(v2)))
    return [_row("route_agreement", "8", float(rel), ctx.tolerance,
                 points=len(pts))]


def _recipe_antisym_div(ctx):
    F = ctx.field("field", "F")
    pts = ctx.points()
    try:
        v1 = ca.divergence_antisymmetric(F, ctx.metric, "sqrtg").at(pts)
        v2 = ca.divergence_antisymmetric(F, ctx.metric, "christoffel").at(pts)
    except ca.CalculusError as err:
        return [_row("antisymmetry", "22", float("nan"), passed=False,
                     error=str(err))]
    rel = np.max(np.abs(v1 - v2) / np.maximum(1.0, np.abs(v2)))
    return [_row("route_agreement", "25", float(rel), ctx.tolerance,
                 points=len(pts))]


def _recipe_density_cov(ctx):
    pts = ctx.points()
    weights = ctx.params.get("weights", [-2.0, -1.0, 1.0, 2.0])
    rows = []
    for w in weights:
        f = ctx.metric.sqrt_det_field(float(w))
        cov = ca.covariant_derivative(f, ctx.metric)
        rows.append(_row("sqrtg_power_covariant_zero", "21",
                         cov.max_abs_at(pts), ctx.tolerance, weight=float(w)))
    scalar = ctx.field("scalar", None) if "scalar" in ctx.params else \
        TensorField.from_expressions(ctx.chart, "1", (), 0.0)
    grad = ca.covariant_derivative(scalar, ctx.metric)
    names = ctx.chart.names
    exact = np.stack(
        [ex.evaluate(ex.differentiate(scalar.expressions[()], n),
                     ctx.chart.env_from_points(pts)) for n in names], axis=-1)
    rows.append(_row("scalar_reduces_to_gradient", "21",
                     float(np.max(np.abs(grad.at(pts) - exact))),
                     ctx.tolerance))
    return rows


def _recipe_transform(ctx):
    block = ctx.params.get("map")
    if not block:
        raise ConfigError("transform recipe needs params.map")
    tgt_block = block.get("target")
    if not tgt_block:
        raise ConfigError("params.map needs a target chart block")
    target = CoordinateChart(tgt_block["names"], tgt_block["lower"],
                             tgt_block["upper"], tgt_block.get("periodic"))
    cmap = dn.ChartMap(ctx.chart, target, block["forward"], block["inverse"],
                       seed=ctx.seed)
    rows = []
    report = dn.determinant_weight_check(ctx.metric, cmap, seed=ctx.seed)
    rows.append(_row("determinant_weight", "12-14",
                     report.max_relative_deviation, ctx.tolerance,
                     samples=report.samples))
    if "field" in ctx.params:
        t = ctx.field("field")
        moved = dn.transform_density(t, cmap)
        back = dn.transform_density(
            moved, dn.ChartMap(target, ctx.chart, block["inverse"],
                               block["forward"], seed=ctx.seed))
        pts = ctx.points()
        rows.append(_row("field_transform_roundtrip", "12-14",
                         float(np.max(np.abs(back.at(pts) - t.at(pts)))),
                         ctx.tolerance, weight=t.weight))
    weight = float(ctx.params.get("weight", 2.0))
    f = ctx.metric.sqrt_det_field(weight)
    back = dn.restore_weight(dn.normalize_weight(f, ctx.metric), ctx.metric,
                             weight)
    pts = ctx.points()
    rows.append(_row("normalize_restore_roundtrip", "12-14",
                     float(np.max(np.abs(back.at(pts) - f.at(pts)))),
                     ctx.tolerance, weight=weight))
    return rows


def _recipe_killing(ctx):
    k = ctx.field("vector", "k")
    pts = ctx.points()
    check = ca.killing_residual(k, ctx.metric, points=pts)
    return [
        _row("killing_residual", "27,30", check.max_norm, ctx.tolerance,
             points=len(pts)),
        _row("lie_equivalence", "27,30", check.lie_difference, ctx.tolerance),
    ]


def _recipe_current(ctx):
    k = ctx.field("vector", "k")
    phi = ctx.field("scalar", "phi")
    T = ph.scalar_stress_energy(phi, ctx.metric)
    pts = ctx.points()
    current = ph.conserved_current(k, T, ctx.metric, points=pts)
    tdiv = ph.stress_energy_divergence(T, ctx.metric)
    eps_t = float(np.max(np.abs(tdiv.at(pts))))
    kmax = k.max_abs_at(pts)
    bound = kmax * eps_t + ctx.tolerance
    jdiv = ca.divergence_vector(current.current, ctx.metric, "sqrtg")
    jmax = jdiv.max_abs_at(pts)
    rows = [
        _row("stress_energy_divergence", "33", eps_t),
        _row("current_divergence", "35-36", jmax, bound,
             killing_residual=current.killing_max_norm),
    ]
    radii = ctx.params.get("flux_radii")
    if radii:
        axis = int(ctx.params.get("flux_axis", 1))
        r1, r2 = float(radii[0]), float(radii[1])
        region = ig.RegionSpec(
            [r1 if a == axis else lo for a, lo in enumerate(ctx.chart.lower)],
            [r2 if a == axis else hi for a, hi in enumerate(ctx.chart.upper)],
        )
        rep = ig.gauss_check(current.current, ctx.metric, region, ctx.grid,
                             rule=ctx.rule())
        inner = ig.surface_integral(current.current, ctx.metric, region,
                                    ctx.grid, rule=ctx.rule(),
                                    faces=[(axis, -1)])
        outer = ig.surface_integral(current.current, ctx.metric, region,
                                    ctx.grid, rule=ctx.rule(),
                                    faces=[(axis, +1)])
        rows.append(_row("flux_agreement", "35-36", abs(outer + inner),
                         max(ctx.tolerance, abs(rep.residual) * 10 + 1e-10),
                         inner=float(inner), outer=float(outer)))
    return rows


def _recipe_gauss_check(ctx):
    P = ctx.field("vector", "P")
    rep = ig.gauss_check(P, ctx.metric, ctx.region(), ctx.grid,
                         rule=ctx.rule(),
                         channel=ctx.params.get("channel", "analytic"),
                         order=ctx.order)
    return [_row("gauss_residual", "10", rep.residual, ctx.tolerance,
                 lhs=rep.lhs, rhs=rep.rhs,
                 resolution=list(rep.resolution), rule=rep.rule,
                 order=rep.order)]


def _recipe_mass(ctx):
    k = ctx.field("vector", "k")
    phi = ctx.field("scalar", "phi")
    T = ph.scalar_stress_energy(phi, ctx.metric)
    kwargs = {}
    if "prefactor" in ctx.params:
        kwargs["prefactor"] = float(ctx.params["prefactor"])
    if "trace_coefficient" in ctx.params:
        kwargs["trace_coefficient"] = float(ctx.params["trace_coefficient"])
    check = ca.killing_residual(k, ctx.metric, points=ctx.points())
    rows = [_row("killing_cap", "38-40", check.max_norm, ctx.tolerance)]
    value = ig.mass_integral(T, k, ctx.metric, ctx.region(), ctx.grid,
                             rule=ctx.rule(), **kwargs)
    rows.append(_row("mass", "38-40", value,
                     resolution=list(ctx.grid.points_per_axis),
                     rule=ctx.rule()))
    return rows


_RECIPES = {
    "christoffel": _recipe_christoffel,
    "divergence": _recipe_divergence,
    "antisym-div": _recipe_antisym_div,
    "density-cov": _recipe_density_cov,
    "transform": _recipe_transform,
    "killing": _recipe_killing,
    "current": _recipe_current,
    "gauss-check": _recipe_gauss_check,
    "mass": _recipe_mass,
}


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
