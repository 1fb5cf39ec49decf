"""Exception types shared across the package."""


class RDCTError(Exception):
    """Base class for all package errors."""


class NoRealRoot(RDCTError):
    pass


class PointAtInfinity(RDCTError):
    pass


class Degenerate(RDCTError):
    pass


class DegenerateCorrespondence(Degenerate):
    pass


class IndexOutOfRange(RDCTError, IndexError):
    pass


class RankDeficient(RDCTError):
    """The polynomial system is not zero-dimensional at working precision."""


class SolverFailed(RDCTError):
    pass


class InsufficientData(RDCTError):
    pass


class EstimationFailed(RDCTError):
    pass


class OptimizerDiverged(RDCTError):
    pass


class SchemaError(RDCTError):
    """Input document does not match the expected structure."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self):
        msg = super().__str__()
        if self.line is not None:
            return f"{msg} (line {self.line}, column {self.column})"
        return msg
