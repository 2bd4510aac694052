from ..errors import EvocafError


class DslError(EvocafError):
    """Base class for acquisition-language errors."""

    kind = "DslError"

    def __init__(self, message: str, pos: int = -1, source: str | None = None):
        self.pos = pos
        self.line = self.col = None
        if source is not None and pos >= 0:
            self.line = source.count("\n", 0, pos) + 1
            self.col = pos - (source.rfind("\n", 0, pos) + 1) + 1
            message = f"{message} (line {self.line}, column {self.col})"
        super().__init__(message)


class ParseError(DslError):
    kind = "ParseError"


class DslNameError(DslError):
    kind = "NameError"


class DslTypeError(DslError):
    kind = "TypeError"


class NumericalFault(DslError):
    kind = "NumericalFault"


class LimitExceeded(DslError):
    kind = "LimitExceeded"
