"""Exception types shared across the package."""


class DeGiorgiError(Exception):
    """Base class for all package errors."""


class ValidationError(DeGiorgiError, ValueError):
    """An input violates a structural invariant (exponents, grids, files)."""


class DomainError(DeGiorgiError, ValueError):
    """A scalar argument lies outside the domain where a formula is defined."""


class RegimeError(DeGiorgiError, ValueError):
    """An operation was requested for the wrong criticality/diffusion regime."""


class GeometryError(DeGiorgiError, ValueError):
    """A cylinder does not fit the grid, or cylinders are not nested."""


class CutoffBoundError(DeGiorgiError):
    """A constructed cutoff violates its declared derivative bounds."""


class StabilityError(DeGiorgiError, RuntimeError):
    """The explicit time step violates the stability restriction."""

    def __init__(self, message, suggested_tau=None):
        super().__init__(message)
        self.suggested_tau = suggested_tau
