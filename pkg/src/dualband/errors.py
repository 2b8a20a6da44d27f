"""Exception types shared across the package.

The CLI maps each family to a process exit code, so new errors should
subclass one of these rather than raising bare ``ValueError``.
"""


class DualbandError(Exception):
    """Base class for all package errors."""


class ParameterError(DualbandError, ValueError):
    """Invalid argument or configuration value."""


class ShapeError(DualbandError, ValueError):
    """Array or cube dimensions do not agree."""


class DomainError(DualbandError, ValueError):
    """Input is well-formed but outside the operation's domain."""


class LoadError(DualbandError, ValueError):
    """A file on disk is malformed or references invalid content."""


class NumericError(DualbandError, ArithmeticError):
    """A computation produced a degenerate or non-finite result."""


class TrainingError(NumericError):
    """Classifier training diverged."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
