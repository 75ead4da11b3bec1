"""Stress-energy fields and Killing-based conserved currents.

The scalar-field stress-energy T^{ab} = s (phi^{;a} phi^{;b}
- (1/2) g^{ab} phi_{;c} phi^{;c}) is built symbolically with the
default normalization s = 1/(4 pi); a current J^n = k_m T^{mn} formed
with a Killing candidate k splits its divergence into a Killing term
and a conservation term, both exposed for diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr as ex
from .calculus import (
    CalculusError,
    _mode,
    _tensor_obj,
    contract,
    covariant_derivative,
    killing_residual,
    lower_index,
)
from .fields import TensorField, UP, DOWN

__all__ = [
    "StressEnergyField",
    "CurrentField",
    "PhysicsError",
    "scalar_stress_energy",
    "stress_energy_divergence",
    "conserved_current",
    "DEFAULT_STRESS_SCALE",
]

DEFAULT_STRESS_SCALE = 1.0 / (4.0 * math.pi)


class PhysicsError(ValueError):
    pass


class StressEnergyField:
    """Symmetric up-up stress-energy with lazily derived mixed form and trace."""

    def __init__(self, tensor, metric, symmetry_atol=1e-10):
        if tensor.indices != (UP, UP) or tensor.weight != 0.0:
            raise PhysicsError("stress-energy must be an up-up tensor of weight 0")
        if tensor.chart != metric.chart:
            raise PhysicsError("stress-energy chart does not match metric chart")
        self.tensor = tensor
        self.metric = metric
        self._check_symmetry(symmetry_atol)

    def _check_symmetry(self, atol):
        if self.tensor.is_analytic:
            pts = self.tensor.chart.random_points(64, rng=17)
            vals = self.tensor.at(pts)
        else:
            vals = self.tensor.samples.values
        asym = vals - np.swapaxes(vals, -1, -2)
        worst = float(np.max(np.abs(asym)))
        scale = max(1.0, float(np.max(np.abs(vals))))
        if worst > atol * scale:
            raise PhysicsError(
                f"stress-energy is not symmetric: max asymmetry {worst:.3e}"
            )

    @property
    def chart(self):
        return self.tensor.chart

    @cached_property
    def mixed(self):
        """T^m_n, the second slot lowered with the metric."""
        return lower_index(self.tensor, self.metric, 1,
                           grid=self.tensor.grid)

    @cached_property
    def trace(self):
        """T = T^m_m as a scalar field."""
        return contract(self.mixed, 0, 1)

    def scaled(self, factor):
        return StressEnergyField(self.tensor.scaled(factor), self.metric)


def scalar_stress_energy(phi, m, scale=DEFAULT_STRESS_SCALE):
    """Stress-energy of a real scalar field.

    T^{ab} = scale * (phi^{;a} phi^{;b} - (1/2) g^{ab} phi_{;c} phi^{;c}),
    symmetric by construction; gradients are raised with the inverse
    metric.  ``scale`` defaults to 1/(4 pi) and is configurable.
    """
    if isinstance(phi, (str, ex.Expr)):
        phi = TensorField.from_expressions(m.chart, phi, (), 0.0)
    if phi.indices != () or phi.weight != 0.0:
        raise PhysicsError("scalar_stress_energy expects a weight-0 scalar field")
    mode = _mode(m, (phi,), grid=phi.grid)
    ms = mode.ms
    d = mode.dim
    comp = mode.comp(phi)[()]
    grad = [ms.diff(comp, a) for a in range(d)]
    grad_up = []
    for a in range(d):
        acc = 0.0
        for b in range(d):
            acc = acc + ms.ginv[a][b] * grad[b]
        grad_up.append(acc)
    norm2 = 0.0
    for c in range(d):
        norm2 = norm2 + grad[c] * grad_up[c]
    out = _tensor_obj(d, 2)
    for a in range(d):
        for b in range(a, d):
            e = scale * (grad_up[a] * grad_up[b] - 0.5 * ms.ginv[a][b] * norm2)
            out[a, b] = out[b, a] = e
    tensor = mode.wrap(out, (UP, UP), 0.0)
    return StressEnergyField(tensor, m)


def stress_energy_divergence(T, m, *, grid=None, metric_derivatives=None,
                             order=4):
    """Covariant divergence T^{mn}_{;n} as a vector field."""
    tensor = T.tensor if isinstance(T, StressEnergyField) else T
    cov = covariant_derivative(tensor, m, grid=grid,
                               metric_derivatives=metric_derivatives,
                               order=order)
    return contract(cov, 1, 2)


@dataclass
class CurrentField:
    """J^n = k_m T^{mn} with the two divergence pieces kept separate.

    ``killing_term`` is k_{m;n} T^{mn}; ``conservation_term`` is
    k_m T^{mn}_{;n}.  Their sum is the divergence of the current.
    """

    current: TensorField
    killing_term: TensorField
    conservation_term: TensorField
    killing_max_norm: float


def conserved_current(k, T, m, *, points=None, killing_tolerance=1e-8,
                      grid=None, metric_derivatives=None, order=4):
    """Current from a Killing candidate and a stress-energy field.

    A residual above ``killing_tolerance`` warns rather than fails: the
    Killing term is computed and returned either way, so the caller can
    see exactly how conservation degrades.
    """
    if not isinstance(T, StressEnergyField):
        T = StressEnergyField(T, m)
    if k.indices != (UP,) or k.weight != 0.0:
        raise PhysicsError("Killing candidate must be an up vector of weight 0")
    check = killing_residual(k, m, points=points, grid=grid,
                             metric_derivatives=metric_derivatives, order=order)
    if check.max_norm > killing_tolerance:
        warnings.warn(
            f"vector is not Killing to {killing_tolerance:g} "
            f"(residual {check.max_norm:.3e}); the current need not be conserved",
            stacklevel=2,
        )
    mode = _mode(m, (k, T.tensor), grid=grid,
                 metric_derivatives=metric_derivatives, order=order)
    ms = mode.ms
    d = mode.dim
    kcomp = mode.comp(k)
    tcomp = mode.comp(T.tensor)
    lowered = []
    for mu in range(d):
        acc = 0.0
        for lam in range(d):
            acc = acc + ms.g[mu][lam] * kcomp[lam]
        lowered.append(acc)
    current = _tensor_obj(d, 1)
    for nu in range(d):
        acc = 0.0
        for mu in range(d):
            acc = acc + lowered[mu] * tcomp[mu, nu]
        current[nu] = acc

    klow = lower_index(k, m, 0, grid=grid,
                       metric_derivatives=metric_derivatives, order=order)
    kcov = covariant_derivative(klow, m, grid=grid,
                                metric_derivatives=metric_derivatives,
                                order=order)
    kcov_comp = kcov.component_scalars(grid)
    killing_term = 0.0
    for mu in range(d):
        for nu in range(d):
            killing_term = killing_term + kcov_comp[mu, nu] * tcomp[mu, nu]

    tdiv = stress_energy_divergence(T, m, grid=grid,
                                    metric_derivatives=metric_derivatives,
                                    order=order)
    tdiv_comp = tdiv.component_scalars(grid)
    conservation_term = 0.0
    for mu in range(d):
        conservation_term = conservation_term + lowered[mu] * tdiv_comp[mu]

    kt = np.empty((), dtype=object)
    kt[()] = killing_term
    ct = np.empty((), dtype=object)
    ct[()] = conservation_term
    return CurrentField(
        current=mode.wrap(current, (UP,), 0.0),
        killing_term=mode.wrap(kt, (), 0.0),
        conservation_term=mode.wrap(ct, (), 0.0),
        killing_max_norm=check.max_norm,
    )
