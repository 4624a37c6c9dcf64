"""Exception types shared across the package."""


class ShrinkerError(Exception):
    """Base class for all package errors."""


class DomainError(ShrinkerError, ValueError):
    """An evaluation was requested outside the domain of an equation (r <= 0, u <= 0, ...)."""


class ConfigError(ShrinkerError, ValueError):
    """Invalid configuration or arguments."""


class NumericalFailure(ShrinkerError, RuntimeError):
    """A numerical procedure did not reach its tolerance."""


class NoConvergence(NumericalFailure):
    """An iterative scheme (anchor refinement, Picard, shooting) failed to converge."""


class GridTooShort(NumericalFailure):
    """A grid does not extend far enough for the exponential tail truncation."""


class InvariantViolation(NumericalFailure):
    """A computed object violates an invariant that should hold by construction."""
