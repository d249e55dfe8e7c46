"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class NumericalFailure(ArithmeticError):
    """Raised when a computation cannot produce a trustworthy result.

    The optional ``indices`` attribute records offending positions (for
    example non-finite entries of a derivative matrix).
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


class SingularMatrixError(NumericalFailure):
    """Raised by the dense solvers when a pivot falls below threshold."""
