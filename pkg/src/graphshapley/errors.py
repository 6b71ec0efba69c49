"""Exception hierarchy shared by all modules."""


class GraphShapleyError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GraphShapleyError):
    """A malformed input file. Carries the offending path and line number."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class ValidationError(GraphShapleyError, ValueError):
    pass


class CapacityError(GraphShapleyError):
    pass


class NumericalError(GraphShapleyError, ArithmeticError):
    pass


class ContractError(GraphShapleyError, ValueError):
    """A caller broke an operation's precondition."""
