"""Exception hierarchy shared by every module in the package."""


class SpmmError(Exception):
    """Base class for all errors raised by batchspmm."""


class FormatError(SpmmError, ValueError):
    """A sparse matrix violates its storage-format invariants."""


class MatrixMarketError(FormatError):
    """A MatrixMarket file could not be parsed."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class ShapeError(SpmmError, ValueError):
    """Operand dimensions do not agree."""


class ParameterError(SpmmError, ValueError):
    """A scalar parameter is outside its admissible range."""


class PlanError(SpmmError):
    """A launch plan does not match the request it is asked to execute."""


class ScratchpadOverflow(SpmmError, RuntimeError):
    """A work unit asked for more scratchpad than its budget.

    Plans are constructed so this never happens; seeing it means a planner bug.
    """
