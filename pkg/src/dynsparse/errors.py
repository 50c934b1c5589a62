"""Exception types shared across the package."""


class DynsparseError(Exception):
    """Base class for all package errors."""


class DomainError(DynsparseError, ValueError):
    """Argument or parameter outside the supported region."""


class NumericalError(DynsparseError, RuntimeError):
    """A numerical routine failed to reach its accuracy target."""


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its budget before converging."""


class DegeneracyError(NumericalError):
    """A particle system collapsed (all weights vanished)."""
