"""Exception hierarchy shared by the solver modules."""


class CCFokkerError(Exception):
    """Base class for all package errors."""


class EvaluationError(CCFokkerError, ValueError):
    """A coefficient or weight evaluated to a non-finite value."""


class AssumptionViolation(CCFokkerError, ValueError):
    """Problem data violates a structural requirement (e.g. D <= 0 at a face)."""


class HypothesisViolation(CCFokkerError, ValueError):
    """A bound was requested outside the range where it is proven."""


class DomainError(CCFokkerError, ValueError):
    """A point lies outside the computational domain."""


class SolverError(CCFokkerError, RuntimeError):
    """Linear solve failed to reach the requested tolerance."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step
