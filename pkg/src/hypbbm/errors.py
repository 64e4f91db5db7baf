"""Exception types raised across the package."""


class HypBBMError(Exception):
    pass


class OverflowNearBoundary(HypBBMError, ArithmeticError):
    """A half-plane point is too close to the boundary to be a disk point in float64."""


class PopulationCapExceeded(HypBBMError, RuntimeError):
    def __init__(self, cap, message=None):
        self.cap = cap
        super().__init__(
            message
            or f"materialized vertex count exceeded cap={cap}; "
            "reduce the horizon or lambda (expected population grows like exp(lambda*t))"
        )


class OutOfHorizon(HypBBMError, ValueError):
    pass


class UnknownAddress(HypBBMError, KeyError):
    pass


class InsufficientData(HypBBMError, ValueError):
    pass


class WrongRegime(HypBBMError, ValueError):
    pass


class ParseError(HypBBMError, ValueError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class ValidationError(HypBBMError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
