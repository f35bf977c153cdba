"""Exception hierarchy.

ValidationError and its subclasses cover malformed inputs and configs and map
to CLI exit code 2; NumericError and its subclasses cover runtime numerical
failures and map to exit code 3.
"""

from __future__ import annotations


class ScorelabError(Exception):
    """Base class for all library errors."""


class ValidationError(ScorelabError):
    """Invalid input, configuration, or precondition violation.

    ``messages`` collects every violated field when a config is validated, so
    a caller sees all problems at once rather than one per attempt.
    """

    def __init__(self, message: str, messages: list[str] | None = None):
        super().__init__(message)
        self.messages = messages if messages is not None else [message]


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class ParseError(ValidationError):
    """Malformed external data file; carries the offending row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class InconsistentGameError(ValidationError):
    """A question/answer step eliminated every element (malformed predicates)."""


class NumericError(ScorelabError):
    """Numerical failure during an otherwise valid computation."""


class SingularPosteriorError(NumericError):
    """Posterior undefined: zero noise at a point that carries no data mass."""


class IntegrationBlowupError(NumericError):
    """Non-finite state during trajectory integration."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ConvergenceError(NumericError):
    """Iterative solver failed to reach tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class EigensolveError(NumericError):
    """Eigendecomposition residual exceeded its acceptance threshold."""


class RefinementError(NumericError):
    """Grid too coarse to resolve a structure; suggests a finer grid."""

    def __init__(self, message: str, suggested_n_grid: int):
        super().__init__(message)
        self.suggested_n_grid = suggested_n_grid


class EvaluationError(NumericError):
    """A user-supplied callable returned invalid values; carries the input."""

    def __init__(self, message: str, x=None):
        super().__init__(message)
        self.x = x


class InsufficientDataError(NumericError):
    """Too few usable points for a fit or estimate."""
