"""Exception hierarchy.

Validation problems (bad input) and solver problems (numerical failure) are
kept apart so the CLI can map them to distinct exit codes.
"""


class GraphfieldError(Exception):
    """Base class for all package errors."""


class ValidationError(GraphfieldError, ValueError):
    """Input violates a documented precondition."""


class NonPositiveLength(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    pass


class InvalidPoint(ValidationError):
    pass


class NonPositiveCoefficient(ValidationError):
    pass


class MeshMismatch(ValidationError):
    pass


class SizeLimitExceeded(ValidationError):
    pass


class SolverError(GraphfieldError, RuntimeError):
    """A factorization or eigensolve failed."""
