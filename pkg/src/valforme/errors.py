"""Exception hierarchy shared by the solver, the simulations and the CLI."""

from __future__ import annotations


class ValformeError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(ValformeError, ValueError):
    """An economy table violates a structural invariant."""

    def __init__(self, message: str, branch: str | None = None):
        super().__init__(message)
        self.branch = branch


class SingularMatrixError(ValformeError, ArithmeticError):
    """Pivoted elimination met a pivot below the singularity threshold."""

    def __init__(self, message: str, pivot_index: int):
        super().__init__(message)
        self.pivot_index = pivot_index


class ConvergenceError(ValformeError, ArithmeticError):
    def __init__(self, message: str, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class EigenDomainError(ValformeError):
    """The coefficient matrix has no usable Perron pair (reducible, or not nonnegative)."""


class ConstraintError(ValformeError, ValueError):
    """Under- or over-determined constraint set."""


class DegenerateConstraintsError(ValformeError):
    """The capital-allocation system is singular for the requested constraints."""


class InfeasibleAllocationError(ValformeError):
    """A solved capital allocation has a negative entry."""

    def __init__(self, message: str, branch: int | None = None, K=None):
        super().__init__(message)
        self.branch = branch
        self.K = K


class NoSolutionError(ValformeError):
    """The z-function never crosses zero downwards on the scanned range."""


class FixedCapitalChoiceError(NoSolutionError):
    """Every scanned rate produced an infeasible allocation for the fixed capitals."""


class NoUniqueAllocationError(ValformeError):
    """The no-surplus demand system has no unique solution."""


class UnsupportedConstructionError(ValformeError, ValueError):
    pass


class ConfigurationError(ValformeError, ValueError):
    pass
