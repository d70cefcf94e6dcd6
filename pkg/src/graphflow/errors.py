"""Exception hierarchy shared by every module."""


class GraphFlowError(Exception):
    """Base class for domain errors (CLI exit status 1)."""


class GraphError(GraphFlowError):
    """A graph violates one of its structural invariants."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation or message


class GraphParseError(GraphError):
    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}", "syntax error")
        self.line = line
        self.column = column


class FatGraphError(GraphFlowError):
    pass


class StructureError(GraphFlowError):
    """Bad metric or Morse labeling."""


class MorseError(GraphFlowError):
    pass


class SolverError(GraphFlowError):
    pass


class OperationError(GraphFlowError):
    pass
