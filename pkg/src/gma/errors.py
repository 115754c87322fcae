"""Exception hierarchy shared by every module."""


class GMAError(Exception):
    """Base class for all errors raised by the package."""


class InvalidArgument(GMAError, ValueError):
    """A parameter is outside its documented domain."""


class EvaluationError(GMAError, ArithmeticError):
    """A field produced a non-finite or inadmissible value at some point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ResourceLimitError(GMAError):
    """A requested construction would exceed the size limits."""


class SolverError(GMAError, RuntimeError):
    """A transport solver failed to converge."""

    def __init__(self, message, solver=None, residual=None):
        super().__init__(message)
        self.solver = solver
        self.residual = residual


class DerivativeUnavailable(GMAError):
    """The requested derivative order is not exposed by this object."""
