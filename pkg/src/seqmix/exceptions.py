"""Exception hierarchy shared by every seqmix module."""


class SeqmixError(Exception):
    """Base class for all library errors."""


class ParameterError(SeqmixError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(SeqmixError, ValueError):
    """Array dimensions do not line up."""


class FeasibilityError(ParameterError):
    """Requested Beta moments cannot be realised by any Beta distribution."""


class NumericError(SeqmixError, ArithmeticError):
    """A loss or gradient became non-finite."""


class ParseError(SeqmixError, ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
