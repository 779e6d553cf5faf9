"""Exception types shared across the package."""


class TensorInferError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TensorInferError, ValueError):
    """Shapes or indices that do not fit together."""


class DegeneracyError(TensorInferError, ArithmeticError):
    """A numerical quantity required by the procedure is (near) singular.

    ``code`` is a short machine-readable tag used by the CLI.
    """

    def __init__(self, message, code="degenerate"):
        super().__init__(message)
        self.code = code


class DegenerateSpectrumWarning(UserWarning):
    """Requested rank exceeds the numerical rank of a matrix being factored."""
