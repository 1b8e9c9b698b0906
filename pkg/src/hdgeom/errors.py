class ValidationError(ValueError):
    """Malformed input: bad shapes, out-of-range values, inconsistent maps."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
