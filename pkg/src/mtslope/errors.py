"""Exception hierarchy shared by every stage of the pipeline."""


class MtSlopeError(Exception):
    """Base class for all errors raised by mtslope."""


class InvalidSpecError(MtSlopeError, ValueError):
    """A design or configuration parameter violates its constraints."""


class UnsupportedRatioError(InvalidSpecError):
    """Resampling between rates whose ratio is not an integer."""


class InvalidInputError(MtSlopeError, ValueError):
    """Input data is malformed (wrong length, NaN, zero energy, ...)."""


class InsufficientDataError(InvalidInputError):
    pass


class DegradationError(MtSlopeError):
    """Sparsification would discard too much taper energy."""


class DegenerateSpectrumError(MtSlopeError, ValueError):
    """Non-positive power inside the fit band, so the log is undefined."""


class InsufficientBandError(MtSlopeError, ValueError):
    pass


class ParseError(MtSlopeError):
    """Malformed input file.

    ``offset`` is a byte offset for binary formats and ``line`` a 1-based
    line number for text formats; either may be None.
    """

    def __init__(self, message, offset=None, line=None):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} (at {', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class CalibrationError(ParseError):
    pass


class StructureError(ParseError):
    """Well-formed tokens in an invalid arrangement (e.g. overlapping spans)."""


class AlignmentError(MtSlopeError, ValueError):
    pass


class NoDataError(MtSlopeError, ValueError):
    pass


class ChannelNotFoundError(MtSlopeError, KeyError):
    def __init__(self, label, available):
        self.label = label
        self.available = list(available)
        super().__init__(
            f"channel {label!r} not found; available: {', '.join(self.available)}"
        )

    def __str__(self):
        return self.args[0]


class TaperConcentrationWarning(UserWarning):
    """More tapers requested than the time-bandwidth product supports."""
