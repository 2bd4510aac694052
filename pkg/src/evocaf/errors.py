"""Exception hierarchy shared across the package."""


class EvocafError(Exception):
    """Base class for all package errors."""


class InvalidData(EvocafError, ValueError):
    pass


class ShapeError(EvocafError, ValueError):
    pass


class NumericalFailure(EvocafError, ArithmeticError):
    pass


class InvalidContext(EvocafError, ValueError):
    pass


class SeedingFailure(EvocafError):
    pass


class OptFailure(EvocafError):
    pass


class TimeLimitExceeded(EvocafError):
    """A budgeted run or evaluation ran past its wall-clock limit."""


class NotSupported(EvocafError, LookupError):
    pass


class DomainError(EvocafError, ValueError):
    pass


class InvalidRequest(EvocafError, ValueError):
    pass


class InitFailure(EvocafError):
    pass
