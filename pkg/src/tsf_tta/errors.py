"""Exception types raised across the package."""


class TsfTtaError(Exception):
    """Base class for all package errors."""


class ShapeError(TsfTtaError, ValueError):
    pass


class RatioError(TsfTtaError, ValueError):
    pass


class TooShort(TsfTtaError, ValueError):
    pass


class NonFiniteValue(TsfTtaError, ValueError):
    pass


class ParseError(TsfTtaError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class SpecError(TsfTtaError, ValueError):
    pass


class SingularSystem(TsfTtaError, ArithmeticError):
    pass


class NonFiniteGradient(TsfTtaError, ArithmeticError):
    pass


class DivergenceError(TsfTtaError, ArithmeticError):
    pass


class OutOfRange(TsfTtaError, IndexError):
    pass


class FutureReadError(TsfTtaError, RuntimeError):
    """A stream consumer tried to read a value that has not arrived yet."""
