"""Exception taxonomy shared across the package.

Argument validation uses plain ValueError; the classes below mark data or
state problems that callers may want to handle (or map to CLI exit codes).
"""


class SlearnError(Exception):
    """Base class for package-specific failures."""


class CycleError(SlearnError):
    """A directed cycle was found where a DAG was required."""


class OrientationConflictError(SlearnError):
    """Orientation rules forced both directions of the same edge."""


class ExtensionError(SlearnError):
    """A PDAG admits no consistent DAG extension."""


class GenerationError(SlearnError):
    """Synthetic problem generation could not satisfy its constraints."""


class DegenerateColumnError(SlearnError):
    """A data column has (near-)zero variance."""


class ConditioningError(SlearnError):
    """A conditioning submatrix is singular or numerically degenerate."""


class InsufficientSamplesError(SlearnError):
    """Too few samples for the requested conditional-independence test."""


class InferenceError(SlearnError):
    """Every member of an ensemble failed on the given problem."""
