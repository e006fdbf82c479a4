"""Exception hierarchy shared by every calfsense module."""


class CalfSenseError(Exception):
    """Base class for all errors raised by this package."""


# core
class InsufficientData(CalfSenseError, ValueError):
    pass


class DegenerateBaseline(CalfSenseError, ValueError):
    pass


# wire / ingest
class FrameError(CalfSenseError, ValueError):
    """A byte sequence could not be decoded as a wire frame."""


class BadMagic(FrameError):
    pass


class UnsupportedVersion(FrameError):
    pass


class CrcMismatch(FrameError):
    pass


class Truncated(FrameError):
    pass


class OutOfRange(CalfSenseError, ValueError):
    pass


class BindFailure(CalfSenseError, OSError):
    pass


class BackpressureTimeout(CalfSenseError, TimeoutError):
    pass


# csv
class CsvFormatError(CalfSenseError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class MalformedHeader(CsvFormatError):
    pass


class RowArity(CsvFormatError):
    pass


class NonNumericCell(CsvFormatError):
    pass


# windowing / features
class SeriesTooShort(CalfSenseError, ValueError):
    pass


class EmptyWindow(CalfSenseError, ValueError):
    pass


# pca / svm
class TooFewSamples(CalfSenseError, ValueError):
    pass


class NonFiniteInput(CalfSenseError, ValueError):
    pass


class DimensionMismatch(CalfSenseError, ValueError):
    pass


class SingleClassInput(CalfSenseError, ValueError):
    pass


class ClassTooSmall(CalfSenseError, ValueError):
    def __init__(self, label, count):
        self.label = label
        self.count = count
        super().__init__(f"class {label} has {count} sample(s); at least 2 required")


class UnknownLabel(CalfSenseError, ValueError):
    pass


class ModelFormatError(CalfSenseError, ValueError):
    pass


class MissingSetsWarning(UserWarning):
    """A (subject, motion) group does not have the expected four sets."""


# health
class EmptySeries(CalfSenseError, ValueError):
    pass


class NoCyclesDetected(CalfSenseError):
    pass


class NoRestSegment(CalfSenseError, ValueError):
    pass


# simulator
class NegativePressure(CalfSenseError, ValueError):
    pass


class UnknownMotion(CalfSenseError, ValueError):
    pass


class InvalidScenarioParams(CalfSenseError, ValueError):
    pass


class StageError(CalfSenseError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
