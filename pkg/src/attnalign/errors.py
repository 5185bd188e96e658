"""Exception hierarchy shared by every module of the toolkit."""


class AlignError(Exception):
    """Base class for toolkit errors."""


class DimensionError(AlignError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(AlignError, RuntimeError):
    """A precondition of an operation was violated."""


class NumericError(AlignError, ArithmeticError):
    """A computation produced or received non-finite values."""


class DataError(AlignError, ValueError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    """A text file could not be parsed.

    ``line`` and ``column`` are 1-based.
    """

    def __init__(self, message, line=None, column=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.column = column
        self.path = path
