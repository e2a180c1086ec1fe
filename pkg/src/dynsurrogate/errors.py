"""Exception hierarchy shared across the toolkit.

Validation problems (bad arguments, malformed configs) raise
:class:`InvalidArgumentError`; numerical breakdowns raise one of the
``*FailureError`` classes.  The CLI maps the former to exit code 2 and the
latter to exit code 3.
"""


class DynSurrogateError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(DynSurrogateError, ValueError):
    """An argument or configuration value violates a documented precondition."""


class CalibrationFailureError(DynSurrogateError, RuntimeError):
    """A parameter solve (e.g. the modulation fit) did not converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class StiffnessFailureError(DynSurrogateError, RuntimeError):
    """The adaptive integrator underflowed its step size."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DivergenceFailureError(DynSurrogateError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class NumericalFailureError(DynSurrogateError, RuntimeError):
    """A numerical routine (e.g. SVD) failed to converge."""
