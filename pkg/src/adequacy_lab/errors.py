"""Shared exception types for the toolkit."""


class AdequacyLabError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(AdequacyLabError):
    def __init__(self, expected, got, context=""):
        self.expected = expected
        self.got = got
        msg = f"dimension mismatch: expected {expected}, got {got}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class EmptyInputError(AdequacyLabError):
    """Raised when a non-empty collection is required."""


class DomainError(AdequacyLabError):
    """Raised when a numeric argument lies outside its mathematical domain."""


class ConvergenceError(AdequacyLabError):
    """Raised when an iterative numeric routine fails to converge."""


class TraceFormatError(AdequacyLabError):
    """Base for trace-file parsing errors; carries a byte offset or line number."""

    def __init__(self, msg, offset=None, line=None):
        self.offset = offset
        self.line = line
        loc = ""
        if offset is not None:
            loc = f" at byte offset {offset}"
        elif line is not None:
            loc = f" at line {line}"
        super().__init__(msg + loc)


class BadMagicError(TraceFormatError):
    pass


class TruncatedStreamError(TraceFormatError):
    pass


class LabelRangeError(TraceFormatError):
    pass


class InconsistentDimensionError(TraceFormatError):
    pass


class EmptyTraceSetError(TraceFormatError):
    pass


class DivergenceError(AdequacyLabError):
    """Training loss became non-finite."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")


class DegenerateDataError(AdequacyLabError):
    """Raised when input data makes a metric undefined (e.g. zero inter-class distance)."""
