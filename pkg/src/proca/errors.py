"""Exception and warning hierarchy shared by every module."""


class ProcaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidNumeric(ProcaError):
    """Non-finite value where a finite one is required."""


class InvalidShape(ProcaError):
    """Array dimensions do not match the operation's contract."""


class ZeroVector(ProcaError):
    """A vector with zero norm was passed where a direction is needed."""


class EmptyInput(ProcaError):
    """An operation received an empty batch or dataset."""


class InvalidParam(ProcaError):
    """A hyperparameter is outside its allowed range."""


class InvalidLabel(ProcaError):
    """A class label is outside 0..K-1."""


class InvalidStep(ProcaError):
    """A time-step index is outside the stream."""


class InvalidInput(ProcaError):
    """Generic precondition violation on user-supplied values."""


class InvalidConfig(ProcaError):
    """Experiment configuration failed validation; message carries the field path."""


class NoSharedClasses(ProcaError):
    """Shared-class detection produced an empty set."""


class NoUsableCentroids(ProcaError):
    """Every candidate class centroid was dropped (zero weight or zero norm)."""


class EmptyClass(ProcaError):
    """Prototype selection was asked to run on a class with no samples."""


class ClassAlreadyStored(ProcaError):
    """Insert attempted for a class already present in the prototype bank."""


class UnknownClass(ProcaError):
    """Update attempted for a class the prototype bank has never seen."""


class EmptyBank(ProcaError):
    """The prototype bank holds no entries."""


class MissingCenter(ProcaError):
    """An anchor's label has no source feature center."""


class IncompleteSource(ProcaError):
    """The source dataset does not cover every class."""


class FormatError(ProcaError):
    """Malformed CSV/manifest content; carries the offending line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ProcaWarning(UserWarning):
    """Base class for run-time warnings emitted by this package."""


class DegenerateDetection(ProcaError, Warning):
    """Cumulative probabilities were uninformative (all equal).

    Warned by threshold detection (which then reports every class) and
    raised by the variance-split baseline (which cannot proceed).
    """


class ClampWarning(ProcaWarning):
    """A log argument was clamped to avoid a non-finite result."""


class ShortfallWarning(ProcaWarning):
    """Fewer prototypes were stored than the configured capacity."""
