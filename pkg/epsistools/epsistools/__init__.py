"""Exact analysis and simulation of the logistic SIS chain with self-infection."""
from epsistools.chain import DerivedQuantities, GeneratorRow, ModelParams, derived
from epsistools.errors import (
    ConfigError,
    DomainError,
    EpsisError,
    InfeasibleWorkloadError,
    NumericalFailure,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DerivedQuantities",
    "DomainError",
    "EpsisError",
    "GeneratorRow",
    "InfeasibleWorkloadError",
    "ModelParams",
    "NumericalFailure",
    "derived",
]
