"""Exception taxonomy shared by every module.

Two failure classes exist at the CLI boundary: bad inputs/configuration
(exit code 2) and numerical failures such as non-convergence (exit code 3).
Everything raised by this package derives from one of them.
"""


class EvalError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class ValidationError(EvalError):
    """Input data or arguments violate a declared invariant."""

    exit_code = 2


class PreconditionError(ValidationError):
    """An operation was called on inputs it is not defined for."""


class ParseError(ValidationError):
    """A file could not be decoded; message carries the line number."""


class ConfigurationError(ValidationError):
    """Mismatched fingerprints, bad flags, or inconsistent run setup."""


class DegenerateDataError(ValidationError):
    """Training or graph data collapses (single class, zero-degree node)."""


class UndefinedMetricError(ValidationError):
    """The requested metric is undefined on this input (e.g. one class only)."""


class MissingPredictionError(ValidationError):
    """A scored source does not cover every required question."""


class NumericalError(EvalError):
    """An iterative routine failed to converge; message carries the residual."""

    exit_code = 3
