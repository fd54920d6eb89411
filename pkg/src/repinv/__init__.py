"""Reparametrization-invariant homogeneous Lagrangians for particles, branes and fields."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundaryNode,
    ConfigError,
    DegenerateSheet,
    DimensionMismatch,
    Diverged,
    DomainError,
    NoSuchTerm,
    NonFiniteField,
    NonMonotone,
    NonPeriodicBoundary,
    NumericalFailure,
    RepinvError,
    SingularMetric,
    StepRejected,
    UndefinedDegree,
    WrongBraneDim,
)
