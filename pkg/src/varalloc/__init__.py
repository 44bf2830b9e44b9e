"""Variance allocation for Gaussian vectors: oracles, solvers, verification."""

from .instances import (
    AllocationVector,
    Instance,
    InstanceFormatError,
    complete_k_subsets_instance,
    cycle_instance,
    erdos_renyi_instance,
    parse_instance,
    serialize_instance,
)
from .oracle import (
    CovarianceSpec,
    Estimate,
    EstimatorConfig,
    FactorizationError,
    GaussianVector,
    QuadratureError,
    derive_seed,
    expected_max_correlated,
    expected_max_independent,
    expected_max_pair,
    expected_max_with_floor,
    graph_objective,
    graph_objective_correlated,
)

__all__ = [
    "AllocationVector",
    "CovarianceSpec",
    "Estimate",
    "EstimatorConfig",
    "FactorizationError",
    "GaussianVector",
    "Instance",
    "InstanceFormatError",
    "QuadratureError",
    "complete_k_subsets_instance",
    "cycle_instance",
    "derive_seed",
    "erdos_renyi_instance",
    "expected_max_correlated",
    "expected_max_independent",
    "expected_max_pair",
    "expected_max_with_floor",
    "graph_objective",
    "graph_objective_correlated",
    "parse_instance",
    "serialize_instance",
]

__version__ = "0.1.0"
