"""Exception hierarchy.

``NumericalFailure`` subclasses map to CLI exit code 2, ``ConfigError`` to 1.
"""


class RepinvError(Exception):
    pass


class ConfigError(RepinvError):
    """Invalid scenario configuration."""


class NumericalFailure(RepinvError):
    pass


class SingularMetric(NumericalFailure):
    pass


class NonFiniteField(NumericalFailure):
    pass


class DimensionMismatch(NumericalFailure, ValueError):
    pass


class DomainError(NumericalFailure, ValueError):
    """A root term was fed a velocity outside its real domain."""


class NoSuchTerm(RepinvError, KeyError):
    pass


class UndefinedDegree(NumericalFailure):
    pass


class StepRejected(NumericalFailure):
    pass


class NonMonotone(NumericalFailure, ValueError):
    pass


class BoundaryNode(NumericalFailure, IndexError):
    pass


class WrongBraneDim(NumericalFailure, ValueError):
    pass


class DegenerateSheet(NumericalFailure):
    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class Diverged(NumericalFailure):
    pass


class NonPeriodicBoundary(NumericalFailure):
    pass
