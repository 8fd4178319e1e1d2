"""Exception hierarchy shared across the package.

Everything raised on bad data or bad configuration derives from
:class:`TieInferError`, so the CLI can map domain failures to a single
exit code.
"""


class TieInferError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidDyadError(TieInferError):
    """A pair of identical user ids was used where a dyad is required."""


class ParseError(TieInferError):
    """Input records could not be parsed.

    ``lines`` holds the offending 1-based line numbers when known.
    """

    def __init__(self, message: str, lines: list[int] | None = None):
        super().__init__(message)
        self.lines = lines or []


class ConfigError(TieInferError):
    """A configuration value is out of range or inconsistent."""


class UndefinedMetricError(TieInferError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""


class DegenerateLabelsError(TieInferError):
    """Training labels contain a single class."""


class StratificationError(TieInferError):
    """Too few samples of a class to build stratified folds."""


class MissingMonthError(TieInferError):
    """A required month has no data or no trained model."""


class InsufficientHistoryError(TieInferError):
    """Fewer prior/subsequent months available than the stack requires."""


class InsufficientDataError(TieInferError):
    """An operation received an empty or unusable input set."""
