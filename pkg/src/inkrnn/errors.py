"""Exception hierarchy shared by every inkrnn module."""


class InkError(Exception):
    """Base class for all errors raised by inkrnn."""


class EmptyInk(InkError):
    pass


class DegenerateInk(InkError):
    pass


class InvalidConfig(InkError, ValueError):
    pass


class ConfigError(InvalidConfig):
    pass


class ShapeError(InkError, ValueError):
    pass


class TapeError(InkError):
    pass


class NumericalError(InkError, ArithmeticError):
    pass


class EmptyInput(InkError, ValueError):
    pass


class LabelError(InkError, ValueError):
    pass


class TokenError(InkError, ValueError):
    pass


class ParseError(InkError, ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno
