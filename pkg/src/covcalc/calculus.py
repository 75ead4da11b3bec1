"""Differential identities of covariant calculus.

Connection coefficients, covariant derivatives of tensor densities of
arbitrary rank and weight, the two equivalent divergence forms for
vectors and antisymmetric rank-2 tensors, Lie derivatives of the
metric, and Killing residuals.

Every operation runs in one of two channels: the analytic channel
builds exact symbolic component expressions (inputs must be
expression-backed), while the grid channel evaluates on a lattice with
stencil derivatives.  The index machinery is shared between the two:
component scalars are either expressions or lattice arrays and combine
through the same arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import expr as ex
from . import kernels
from .fields import TensorField, FieldError, UP, DOWN
from .grid import SampledField

__all__ = [
    "ChristoffelField",
    "ChristoffelTrace",
    "KillingCheck",
    "CalculusError",
    "christoffel",
    "christoffel_trace",
    "covariant_derivative",
    "divergence_vector",
    "divergence_antisymmetric",
    "lie_derivative_metric",
    "killing_residual",
    "lower_index",
    "raise_index",
    "contract",
]


class CalculusError(ValueError):
    pass


# ---------------------------------------------------------------------------
# channel plumbing
# ---------------------------------------------------------------------------

@dataclass
class _Mode:
    ms: object            # MetricScalars
    grid: object          # GridSpec or None

    @property
    def analytic(self):
        return self.grid is None

    @property
    def dim(self):
        return self.ms.chart.dim

    def comp(self, t):
        return t.component_scalars(self.grid)

    def wrap(self, obj, indices, weight):
        indices = tuple(indices)
        if self.analytic:
            return TensorField(self.ms.chart, indices, weight, exprs=obj)
        shape = self.grid.shape
        out = np.empty(shape + obj.shape)
        for idx in np.ndindex(obj.shape) if obj.shape else [()]:
            out[(...,) + idx] = np.broadcast_to(obj[idx], shape)
        return TensorField(self.ms.chart, indices, weight,
                           samples=SampledField(self.grid, out))


def _mode(m, fields, grid=None, metric_derivatives=None, order=4):
    for t in fields:
        if t.chart != m.chart:
            raise CalculusError("field chart does not match metric chart")
    if grid is None:
        if not m.is_analytic or any(not t.is_analytic for t in fields):
            raise CalculusError(
                "analytic channel needs expression-backed metric and fields; "
                "pass grid=... for the lattice channel"
            )
        return _Mode(ms=m.scalars(), grid=None)
    return _Mode(ms=m.scalars(grid, derivatives=metric_derivatives, order=order),
                 grid=grid)


def _tensor_obj(dim, rank):
    return np.empty((dim,) * rank, dtype=object)


def _gamma(ms):
    """Connection coefficients Gamma^m_ab from metric scalars, cached."""
    if ms.gamma is not None:
        return ms.gamma
    d = ms.chart.dim
    gamma = [[[None] * d for _ in range(d)] for _ in range(d)]
    if ms.analytic:
        for mu in range(d):
            for a in range(d):
                for b in range(a, d):
                    terms = []
                    for s in range(d):
                        bracket = ex.sub(
                            ex.add(ms.dg[s][a][b], ms.dg[s][b][a]), ms.dg[a][b][s]
                        )
                        terms.append(ex.mul(ms.ginv[mu][s], bracket))
                    e = ex.mul(ex.const(0.5), ex.esum(terms))
                    gamma[mu][a][b] = gamma[mu][b][a] = e
    else:
        data = ms.data
        shape = ms.grid.shape
        flat = kernels.christoffel_core(
            data.ginv.reshape(-1, d, d), data.dg.reshape(-1, d, d, d)
        ).reshape(shape + (d, d, d))
        for mu in range(d):
            for a in range(d):
                for b in range(a, d):
                    gamma[mu][a][b] = gamma[mu][b][a] = flat[..., mu, a, b]
    ms.gamma = gamma
    return gamma


def _gamma_trace(ms):
    d = ms.chart.dim
    gam = _gamma(ms)
    out = []
    for lam in range(d):
        acc = 0.0
        for nu in range(d):
            acc = acc + gam[nu][lam][nu]
        out.append(acc)
    return out


# ---------------------------------------------------------------------------
# Christoffel symbols
# ---------------------------------------------------------------------------

class ChristoffelField:
    """Connection coefficients, first index up, symmetric in the lower pair."""

    __slots__ = ("chart", "provenance", "_exprs", "_samples")

    def __init__(self, chart, provenance, exprs=None, samples=None):
        self.chart = chart
        self.provenance = provenance
        self._exprs = exprs
        self._samples = samples

    @property
    def is_analytic(self):
        return self._exprs is not None

    @property
    def expressions(self):
        if self._exprs is None:
            raise CalculusError("connection is lattice-backed")
        return self._exprs

    @property
    def grid(self):
        return self._samples.grid if self._samples is not None else None

    def at(self, points):
        d = self.chart.dim
        env = self.chart.env_from_points(points)
        shape = next(iter(env.values())).shape
        out = np.empty(shape + (d, d, d))
        comp = self.expressions
        for mu in range(d):
            for a in range(d):
                for b in range(a, d):
                    vals = ex.evaluate(comp[mu, a, b], env)
                    out[..., mu, a, b] = out[..., mu, b, a] = vals
        return out

    def values_on(self, grid):
        if self._samples is not None:
            if self._samples.grid != grid:
                raise CalculusError("connection sampled on a different grid")
            return self._samples.values
        env = grid.env()
        d = self.chart.dim
        out = np.empty(grid.shape + (d, d, d))
        comp = self.expressions
        for mu in range(d):
            for a in range(d):
                for b in range(a, d):
                    vals = ex.evaluate(comp[mu, a, b], env)
                    out[..., mu, a, b] = out[..., mu, b, a] = vals
        return out


def christoffel(m, *, grid=None, metric_derivatives=None, order=4):
    """Connection coefficients of the metric.

    Gamma^mu_ab = (1/2) g^{mu s} (g_{sa,b} + g_{sb,a} - g_{ab,s}).
    Analytic channel returns symbolic components; the grid channel
    records whether metric gradients were exact or stencil-based.
    """
    mode = _mode(m, (), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    gam = _gamma(mode.ms)
    d = mode.dim
    if mode.analytic:
        comp = _tensor_obj(d, 3)
        for mu, a, b in product(range(d), repeat=3):
            comp[mu, a, b] = gam[mu][a][b]
        return ChristoffelField(m.chart, "analytic", exprs=comp)
    provenance = mode.ms.data.provenance
    out = np.empty(grid.shape + (d, d, d))
    for mu, a, b in product(range(d), repeat=3):
        out[..., mu, a, b] = np.broadcast_to(gam[mu][a][b], grid.shape)
    return ChristoffelField(m.chart, provenance,
                            samples=SampledField(grid, out))


@dataclass
class ChristoffelTrace:
    """Both routes to the contracted connection Gamma^nu_{lam nu}."""

    from_sqrtg: TensorField       # gradient of log sqrt(g)
    from_contraction: TensorField # direct index contraction

    def max_difference(self, points):
        a = self.from_sqrtg.at(points)
        b = self.from_contraction.at(points)
        return float(np.max(np.abs(a - b)))


def christoffel_trace(m, *, grid=None, metric_derivatives=None, order=4):
    """Contracted connection as the gradient of log sqrt(g), both routes."""
    mode = _mode(m, (), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    ms = mode.ms
    d = mode.dim
    log_route = _tensor_obj(d, 1)
    for lam in range(d):
        log_route[lam] = ms.dsqrtg[lam] / ms.sqrtg
    contraction = _tensor_obj(d, 1)
    for lam, val in enumerate(_gamma_trace(ms)):
        contraction[lam] = val
    return ChristoffelTrace(
        from_sqrtg=mode.wrap(log_route, (DOWN,), 0.0),
        from_contraction=mode.wrap(contraction, (DOWN,), 0.0),
    )


# ---------------------------------------------------------------------------
# covariant derivative of tensor densities
# ---------------------------------------------------------------------------

def _cov_deriv_scalars(comp, indices, weight, ms):
    d = ms.chart.dim
    gam = _gamma(ms)
    rank = len(indices)
    out = _tensor_obj(d, rank + 1)
    wfac = None
    if weight != 0.0:
        wfac = [ms.dsqrtg[rho] / ms.sqrtg for rho in range(d)]
    for idx in product(range(d), repeat=rank):
        for rho in range(d):
            acc = ms.diff(comp[idx], rho)
            for slot, ud in enumerate(indices):
                pos = idx[slot]
                for s in range(d):
                    swapped = idx[:slot] + (s,) + idx[slot + 1:]
                    if ud == UP:
                        acc = acc + gam[pos][s][rho] * comp[swapped]
                    else:
                        acc = acc - gam[s][pos][rho] * comp[swapped]
            if wfac is not None:
                acc = acc - weight * wfac[rho] * comp[idx]
            out[idx + (rho,)] = acc
    return out


def covariant_derivative(t, m, *, grid=None, metric_derivatives=None, order=4):
    """Covariant derivative; appends one down index, keeps the weight.

    T^{a..}_{b..;rho} = T^{a..}_{b..,rho} + sum of up-slot connection
    terms - sum of down-slot terms - w (sqrtg_{,rho}/sqrtg) T.  A
    weight-0 scalar reduces exactly to its gradient.
    """
    mode = _mode(m, (t,), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    out = _cov_deriv_scalars(mode.comp(t), t.indices, t.weight, mode.ms)
    return mode.wrap(out, t.indices + (DOWN,), t.weight)


# ---------------------------------------------------------------------------
# divergences
# ---------------------------------------------------------------------------

def _require_signature(t, indices, what):
    if t.indices != tuple(indices) or t.weight != 0.0:
        raise CalculusError(
            f"{what} must have index signature {tuple(indices)} and weight 0, "
            f"got {t.indices} with weight {t.weight:g}"
        )


def divergence_vector(P, m, route="sqrtg", *, grid=None,
                      metric_derivatives=None, order=4):
    """Divergence of a vector field by either of two equivalent routes.

    'christoffel': P^nu_{,nu} + P^lam Gamma^nu_{lam nu}
    'sqrtg':       (sqrtg P^nu)_{,nu} / sqrtg
    """
    _require_signature(P, (UP,), "divergence_vector input")
    mode = _mode(m, (P,), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    ms = mode.ms
    d = mode.dim
    comp = mode.comp(P)
    if route == "christoffel":
        tr = _gamma_trace(ms)
        acc = 0.0
        for nu in range(d):
            acc = acc + ms.diff(comp[nu], nu)
        for lam in range(d):
            acc = acc + comp[lam] * tr[lam]
    elif route == "sqrtg":
        acc = 0.0
        for nu in range(d):
            acc = acc + ms.diff(ms.sqrtg * comp[nu], nu)
        acc = acc / ms.sqrtg
    else:
        raise CalculusError("route must be 'christoffel' or 'sqrtg'")
    out = np.empty((), dtype=object)
    out[()] = acc
    return mode.wrap(out, (), 0.0)


def _check_antisymmetry(F, mode, atol):
    d = mode.dim
    if mode.analytic:
        pts = F.chart.random_points(64, rng=11)
        vals = F.at(pts)
    else:
        vals = F.values_on(mode.grid)
    sym = vals + np.swapaxes(vals, -1, -2)
    worst = float(np.max(np.abs(sym)))
    if worst > atol:
        raise CalculusError(
            f"input is not antisymmetric: max symmetric part {worst:.3e} "
            f"exceeds {atol:g}"
        )
    return float(np.max(np.abs(vals)))


def divergence_antisymmetric(F, m, route="sqrtg", *, grid=None,
                             metric_derivatives=None, order=4,
                             antisymmetry_atol=1e-12):
    """Divergence of an antisymmetric up-up rank-2 field over its last index.

    'sqrtg':       (sqrtg F^{ab})_{,b} / sqrtg
    'christoffel': the full connection form, including the term that
    cancels by antisymmetry against the symmetric lower pair (its
    vanishing is verified on probe points).
    """
    _require_signature(F, (UP, UP), "divergence_antisymmetric input")
    mode = _mode(m, (F,), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    scale = _check_antisymmetry(F, mode, antisymmetry_atol)
    ms = mode.ms
    d = mode.dim
    comp = mode.comp(F)
    out = _tensor_obj(d, 1)
    if route == "sqrtg":
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc = acc + ms.diff(ms.sqrtg * comp[a, b], b)
            out[a] = acc / ms.sqrtg
    elif route == "christoffel":
        tr = _gamma_trace(ms)
        gam = _gamma(ms)
        cancel = _tensor_obj(d, 1)
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc = acc + ms.diff(comp[a, b], b)
            for mu in range(d):
                acc = acc + comp[a, mu] * tr[mu]
            sym_term = 0.0
            for mu in range(d):
                for b in range(d):
                    sym_term = sym_term + gam[a][mu][b] * comp[mu, b]
            cancel[a] = sym_term
            out[a] = acc + sym_term
        _verify_cancellation(mode, cancel, scale)
    else:
        raise CalculusError("route must be 'christoffel' or 'sqrtg'")
    return mode.wrap(out, (UP,), 0.0)


def _verify_cancellation(mode, cancel, scale):
    field = mode.wrap(cancel, (UP,), 0.0)
    if mode.analytic:
        pts = field.chart.random_points(64, rng=11)
        worst = field.max_abs_at(pts)
    else:
        worst = float(np.max(np.abs(field.values_on(mode.grid))))
    limit = 1e-8 * max(1.0, scale)
    if worst > limit:  # pragma: no cover - unreachable for antisymmetric input
        raise CalculusError(
            f"symmetric-pair connection term failed to cancel: {worst:.3e}"
        )


# ---------------------------------------------------------------------------
# Lie derivative and Killing residual
# ---------------------------------------------------------------------------

def lie_derivative_metric(k, m, *, grid=None, metric_derivatives=None, order=4):
    """Lie derivative of the metric along ``k``.

    L_k g_{mn} = k^c g_{mn,c} + g_{mc} k^c_{,n} + g_{nc} k^c_{,m};
    manifestly symmetric, so the output is symmetric by construction.
    """
    _require_signature(k, (UP,), "lie_derivative_metric input")
    mode = _mode(m, (k,), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    ms = mode.ms
    d = mode.dim
    comp = mode.comp(k)
    dk = [[ms.diff(comp[c], n) for n in range(d)] for c in range(d)]
    out = _tensor_obj(d, 2)
    for mu in range(d):
        for nu in range(mu, d):
            acc = 0.0
            for c in range(d):
                acc = acc + comp[c] * ms.dg[mu][nu][c]
                acc = acc + ms.g[mu][c] * dk[c][nu]
                acc = acc + ms.g[nu][c] * dk[c][mu]
            out[mu, nu] = out[nu, mu] = acc
    return mode.wrap(out, (DOWN, DOWN), 0.0)


@dataclass
class KillingCheck:
    """Symmetrized covariant gradient of a lowered vector, with norms."""

    residual: TensorField
    max_norm: float
    lie_difference: float


def killing_residual(k, m, *, points=None, grid=None, metric_derivatives=None,
                     order=4, lie_tolerance=None):
    """Killing-equation residual k_{n;m} + k_{m;n} and its max norm.

    The residual is also checked against the Lie derivative of the
    metric (the two agree identically); ``lie_tolerance`` defaults to a
    scale-aware bound and a violation raises.
    """
    _require_signature(k, (UP,), "killing_residual input")
    mode = _mode(m, (k,), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    ms = mode.ms
    d = mode.dim
    comp = mode.comp(k)
    lowered = _tensor_obj(d, 1)
    for mu in range(d):
        acc = 0.0
        for lam in range(d):
            acc = acc + ms.g[mu][lam] * comp[lam]
        lowered[mu] = acc
    kcov = _cov_deriv_scalars(lowered, (DOWN,), 0.0, ms)
    out = _tensor_obj(d, 2)
    for mu in range(d):
        for nu in range(mu, d):
            e = kcov[mu, nu] + kcov[nu, mu]
            out[mu, nu] = out[nu, mu] = e
    residual = mode.wrap(out, (DOWN, DOWN), 0.0)

    lie = lie_derivative_metric(k, m, grid=grid,
                                metric_derivatives=metric_derivatives,
                                order=order)
    if mode.analytic:
        if points is None:
            points = m.chart.random_points(200, rng=13)
        res_vals = residual.at(points)
        lie_vals = lie.at(points)
    else:
        res_vals = residual.values_on(mode.grid)
        lie_vals = lie.values_on(mode.grid)
    max_norm = float(np.max(np.abs(res_vals)))
    lie_difference = float(np.max(np.abs(res_vals - lie_vals)))
    if lie_tolerance is None:
        scale = max(1.0, float(np.max(np.abs(lie_vals))),
                    float(np.max(np.abs(res_vals))))
        if mode.analytic:
            lie_tolerance = 1e-9 * scale
        else:
            # stencils do not satisfy the product rule exactly, so the two
            # routes differ at truncation level on a lattice
            h = max(mode.grid.spacing(a) for a in range(mode.dim))
            lie_tolerance = max(1e-10, 50.0 * h**order) * scale
    if lie_difference > lie_tolerance:
        raise CalculusError(
            f"residual disagrees with the metric Lie derivative: "
            f"{lie_difference:.3e} > {lie_tolerance:.3e}"
        )
    return KillingCheck(residual=residual, max_norm=max_norm,
                        lie_difference=lie_difference)


# ---------------------------------------------------------------------------
# index utilities
# ---------------------------------------------------------------------------

def lower_index(t, m, slot, *, grid=None, metric_derivatives=None, order=4):
    """Contract slot ``slot`` (up) with the metric, making it a down slot."""
    return _move_index(t, m, slot, UP, grid, metric_derivatives, order)


def raise_index(t, m, slot, *, grid=None, metric_derivatives=None, order=4):
    """Contract slot ``slot`` (down) with the inverse metric."""
    return _move_index(t, m, slot, DOWN, grid, metric_derivatives, order)


def _move_index(t, m, slot, expect, grid, metric_derivatives, order):
    if not 0 <= slot < t.rank:
        raise CalculusError(f"slot {slot} out of range for rank {t.rank}")
    if t.indices[slot] != expect:
        raise CalculusError(
            f"slot {slot} is '{t.indices[slot]}', expected '{expect}'"
        )
    mode = _mode(m, (t,), grid=grid, metric_derivatives=metric_derivatives,
                 order=order)
    ms = mode.ms
    matrix = ms.g if expect == UP else ms.ginv
    d = mode.dim
    comp = mode.comp(t)
    out = _tensor_obj(d, t.rank)
    for idx in product(range(d), repeat=t.rank):
        acc = 0.0
        mu = idx[slot]
        for lam in range(d):
            swapped = idx[:slot] + (lam,) + idx[slot + 1:]
            acc = acc + matrix[mu][lam] * comp[swapped]
        out[idx] = acc
    indices = list(t.indices)
    indices[slot] = DOWN if expect == UP else UP
    return mode.wrap(out, indices, t.weight)


def contract(t, slot_a, slot_b):
    """Trace over one up and one down slot of the same field."""
    if slot_a == slot_b:
        raise CalculusError("cannot contract a slot with itself")
    if not (0 <= slot_a < t.rank and 0 <= slot_b < t.rank):
        raise CalculusError("contraction slots out of range")
    if {t.indices[slot_a], t.indices[slot_b]} != {UP, DOWN}:
        raise CalculusError("contraction needs one up and one down slot")
    first, second = sorted((slot_a, slot_b))
    d = t.dim
    comp = t.component_scalars(t.grid)
    keep = [i for i in range(t.rank) if i not in (first, second)]
    out = _tensor_obj(d, len(keep))
    for idx in product(range(d), repeat=len(keep)):
        acc = 0.0
        for s in range(d):
            full = list(idx)
            full.insert(first, s)
            full.insert(second, s)
            acc = acc + comp[tuple(full)]
        out[idx] = acc
    indices = tuple(t.indices[i] for i in keep)
    if t.is_analytic:
        return TensorField(t.chart, indices, t.weight, exprs=out)
    shape = t.grid.shape
    arr = np.empty(shape + out.shape)
    for idx in np.ndindex(out.shape) if out.shape else [()]:
        arr[(...,) + idx] = np.broadcast_to(out[idx], shape)
    return TensorField(t.chart, indices, t.weight,
                       samples=SampledField(t.grid, arr))
