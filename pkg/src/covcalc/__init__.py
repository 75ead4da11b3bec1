"""Covariant calculus on structured grids.

Christoffel symbols, covariant derivatives of tensor densities of
arbitrary weight, Killing-vector machinery, coordinate-change laws for
densities, and proper-volume/surface quadrature with a generalized
divergence-theorem check, over user-defined metrics on 2- to
4-dimensional charts.
"""

from .calculus import (
    ChristoffelField,
    ChristoffelTrace,
    KillingCheck,
    christoffel,
    christoffel_trace,
    contract,
    covariant_derivative,
    divergence_antisymmetric,
    divergence_vector,
    killing_residual,
    lie_derivative_metric,
    lower_index,
    raise_index,
)
from .density import (
    ChartMap,
    determinant_weight_check,
    normalize_weight,
    restore_weight,
    transform_density,
    transform_metric,
)
from .fields import TensorField
from .grid import (
    CoordinateChart,
    GridSpec,
    SampledField,
    calibrated_tolerance,
    convergence_rate,
    partial_derivative,
    sample,
)
from .integrate import (
    GaussReport,
    RegionSpec,
    SurfaceElement,
    gauss_check,
    mass_integral,
    surface_element,
    surface_integral,
    volume_integral,
)
from .metric import (
    MetricField,
    MetricPointData,
    metric_at,
    minkowski4,
    polar2,
    preset,
    schwarzschild,
    spherical3,
    static_spherical,
)
from .physics import (
    CurrentField,
    StressEnergyField,
    conserved_current,
    scalar_stress_energy,
    stress_energy_divergence,
)

__version__ = "0.1.0"

__all__ = [
    "CoordinateChart", "GridSpec", "SampledField", "partial_derivative",
    "sample", "convergence_rate", "calibrated_tolerance",
    "TensorField",
    "MetricField", "MetricPointData", "metric_at", "preset", "minkowski4",
    "polar2", "spherical3", "static_spherical", "schwarzschild",
    "ChristoffelField", "ChristoffelTrace", "KillingCheck", "christoffel",
    "christoffel_trace", "covariant_derivative", "divergence_vector",
    "divergence_antisymmetric", "lie_derivative_metric", "killing_residual",
    "lower_index", "raise_index", "contract",
    "ChartMap", "transform_density", "transform_metric",
    "determinant_weight_check", "normalize_weight", "restore_weight",
    "StressEnergyField", "CurrentField", "scalar_stress_energy",
    "stress_energy_divergence", "conserved_current",
    "RegionSpec", "SurfaceElement", "GaussReport", "volume_integral",
    "surface_integral", "surface_element", "gauss_check", "mass_integral",
    "__version__",
]
