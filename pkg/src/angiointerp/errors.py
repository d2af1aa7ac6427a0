"""Exception hierarchy.

The CLI maps these onto exit codes: config errors exit 2, data errors exit 3,
numeric errors exit 4.
"""


class AngioInterpError(Exception):
    """Base class for all package errors."""


class ConfigError(AngioInterpError, ValueError):
    """Invalid configuration or parameter value."""


class DataError(AngioInterpError, ValueError):
    """Input data violates a precondition."""


class FormatError(DataError):
    """Unreadable or unsupported file contents."""


class ShapeError(DataError):
    """Arrays that must agree in shape do not."""


class DomainError(DataError):
    """A value lies outside its admissible domain (e.g. nonpositive depth)."""


class DegenerateInputError(DataError):
    """Input carries no usable information (e.g. nothing covered)."""


class NumericError(AngioInterpError, ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
