"""Exception and warning classes raised across flowdmd."""


class FlowDmdError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(FlowDmdError, ValueError):
    pass


class IngestionDefectError(FlowDmdError, ValueError):
    """Non-finite or otherwise corrupt numbers reached a numerical kernel."""


class SchemaError(FlowDmdError):
    """A mapped column is missing from a delimited input."""


class DataError(FlowDmdError, ValueError):
    """One or more input rows hold invalid values.

    ``rows`` lists ``(line_number, message)`` for every offending row.
    """

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class MappingError(FlowDmdError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ShapeError(FlowDmdError, ValueError):
    pass


class OrderingError(FlowDmdError, ValueError):
    pass


class DivisionGuardError(FlowDmdError, ZeroDivisionError):
    pass


class InsufficientDataError(FlowDmdError, ValueError):
    pass


class DegenerateDataError(FlowDmdError, ValueError):
    pass


class NumericalError(FlowDmdError, ArithmeticError):
    pass


class ModeOverflowError(FlowDmdError, OverflowError):
    """Evaluating a mode's exponential would overflow; ``mode`` is its index."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class CoverageError(FlowDmdError, ValueError):
    """Requested test weeks are absent from the truth data."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class FormatError(FlowDmdError, ValueError):
    """A persisted file does not match the expected layout."""


class RankTruncationWarning(UserWarning):
    pass


class DegenerateExcitationWarning(UserWarning):
    pass


class ConjugateConsistencyWarning(UserWarning):
    pass
