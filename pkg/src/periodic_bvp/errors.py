"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match the spectral operator."""


class ConfigurationError(ValueError):
    """Invalid solver configuration (grid size, tolerances, ...)."""


class DomainError(ValueError):
    """A parameter lies outside the region where an operation is defined."""


class ConditioningError(ArithmeticError):
    """A per-mode block is too close to singular to invert reliably."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class NotSolvableError(RuntimeError):
    """The periodic problem fails the solvability test; use ``pseudosolve``."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonConvergenceError(RuntimeError):
    """An iterative method stopped without meeting its convergence criterion.

    ``history`` holds whatever iterates were produced, ``last_residual`` the
    final residual or increment.
    """

    def __init__(self, message, history=None, last_residual=None):
        super().__init__(message)
        self.history = history if history is not None else []
        self.last_residual = last_residual


class VerificationError(RuntimeError):
    """A numerical consistency check failed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
