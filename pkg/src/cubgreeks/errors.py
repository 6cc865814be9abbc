"""Exception types shared across the package."""


class CubatureError(Exception):
    """Base class for all errors raised by this package."""


class InvalidWordError(CubatureError):
    """A multi-index contains a letter outside {0, ..., d}."""


class ContextMismatchError(CubatureError):
    """Two elements from incompatible algebra contexts were combined."""


class DomainError(CubatureError):
    """An argument violates the mathematical domain of an operation."""


class InvalidPathError(CubatureError):
    """A piecewise-linear path fails its structural invariants."""


class UnsupportedDegreeError(CubatureError):
    """No built-in formula exists for the requested degree."""


class NoFormulaFoundError(CubatureError):
    """The moment-matching solver could not reach the target tolerance."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class DirectionNotAttainableError(CubatureError):
    """The requested direction is outside the span of the bracket system."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BlowUpError(CubatureError):
    """The ODE or SDE state became non-finite."""

    def __init__(self, message, segment=None):
        super().__init__(message)
        self.segment = segment


class BudgetExceededError(CubatureError):
    """The evaluation tree would exceed the configured leaf cap."""

    def __init__(self, message, required=None, cap=None):
        super().__init__(message)
        self.required = required
        self.cap = cap


class EllipticityError(CubatureError):
    """The diffusion matrix is singular where invertibility is required."""


class UnsupportedPayoffError(CubatureError):
    """No closed-form reference exists for the requested payoff."""


class ConfigError(CubatureError):
    """A run configuration (CLI flags, model file) is invalid."""
