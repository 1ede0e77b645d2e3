"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    pass


class RangeError(ArithmeticError):
    pass


class NumericError(ArithmeticError):
    pass


class NoFreeBoundary(RuntimeError):
    pass


class PropertyViolation(AssertionError):
    """A structural inequality failed at a sampled point.

    ``witness`` holds the offending sample, e.g. ``{"s": 2.0, "t": 0.1}``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness or {}
