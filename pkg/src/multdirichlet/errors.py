"""Exception hierarchy shared by every module."""


class MultDirichletError(Exception):
    """Base class for all package errors."""


class DomainError(MultDirichletError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ResourceError(MultDirichletError, RuntimeError):
    """An enumeration would exceed its candidate budget."""


class SolverError(MultDirichletError, RuntimeError):
    """A root finder could not bracket or converge."""


class InternalError(MultDirichletError, AssertionError):
    """A guaranteed outcome failed to materialise; indicates a bug."""
