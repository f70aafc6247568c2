"""Exception hierarchy shared across the package."""


class ProVQError(Exception):
    """Base class for all package errors."""


class ConfigError(ProVQError, ValueError):
    """Invalid configuration, bad key, or out-of-range setting."""


class DimensionError(ProVQError, ValueError):
    """Operand shapes are incompatible."""


class GeometryError(ProVQError, ValueError):
    """Degenerate dataset geometry (e.g. collinear triangle vertices)."""


class NumericError(ProVQError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class OptimizerError(NumericError):
    """Non-finite gradient reached the optimizer."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, message, step=None, last_finite_step=None):
        super().__init__(message)
        self.step = step
        self.last_finite_step = last_finite_step


class EmptyEvaluationError(ProVQError, ValueError):
    """A usage statistic was requested over zero assignments."""


class SchemaError(ProVQError, ValueError):
    """A serialized file has an unexpected format version or layout."""
