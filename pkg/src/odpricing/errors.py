"""Exception types shared by the solvers."""

from __future__ import annotations


class PricingError(Exception):
    """Base class for solver failures in this package."""


class DomainError(PricingError, ValueError):
    """Some induced trip price is negative."""

    def __init__(self, message: str, od: tuple[int, int] | None = None):
        super().__init__(message)
        self.od = od


class SingularSystem(PricingError):
    """A linear system could not be factorized, even with a ridge."""


class NoConvergence(PricingError):
    """An iterative solver ran out of iterations.

    ``best`` carries whatever the solver considered its best iterate, and
    ``residual`` the corresponding residual norm.
    """

    def __init__(self, message: str, best=None, residual: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class DomainStuck(NoConvergence):
    """Every damped step would leave the nonnegative-price domain."""


class Infeasible(PricingError):
    """No interior starting point exists."""


class UnbalancedFlow(PricingError, ValueError):
    """A flow passed for cycle decomposition is not balanced."""
