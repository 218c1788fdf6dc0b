"""Exception types shared across the package.

Every error raised on purpose derives from MaskPolicyError so callers
(and the CLI) can separate data/validation failures from genuine bugs.
"""


class MaskPolicyError(Exception):
    """Base class for all errors raised by this package."""


# --- numeric core ---------------------------------------------------------

class ShapeMismatchError(MaskPolicyError):
    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")
        self.op = op
        self.shapes = shapes


class NonFiniteError(MaskPolicyError):
    """A NaN or Inf appeared in a tensor value."""


class NonScalarLossError(MaskPolicyError):
    """backward() was called on a node that is not a scalar."""


# --- corpus ---------------------------------------------------------------

class EmptyCorpusError(MaskPolicyError):
    """No tokens found in any corpus file."""


class InvalidChunkLengthError(MaskPolicyError):
    """Chunk length below the supported minimum."""


class AnswerNotFoundError(MaskPolicyError):
    """No token span in the context matches the answer."""


class MalformedRecordError(MaskPolicyError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


# --- policy ---------------------------------------------------------------

class EmptySequenceError(MaskPolicyError):
    """An operation received a zero-length token sequence."""


class SequenceTooLongError(MaskPolicyError):
    """Input exceeds the policy's maximum sequence length."""


class SpanOutOfBoundsError(MaskPolicyError):
    """A span index falls outside the sequence it refers to."""


class EmptyDatasetError(MaskPolicyError):
    """A dataset that must be non-empty was empty."""


class NonFiniteLossError(NonFiniteError):
    """Training loss became NaN or Inf; carries epoch/batch context."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class NoCandidatesError(MaskPolicyError):
    """Span selection received an empty candidate list."""


# --- baselines / corruption ----------------------------------------------

class InvalidRateError(MaskPolicyError):
    """Masking rate outside [0, 1]."""


class AllMaskedError(MaskPolicyError):
    """Corruption would mask every token, leaving no context."""


class VocabMismatchError(MaskPolicyError):
    """Checkpoint or data was produced with a different vocabulary."""


# --- evaluation -----------------------------------------------------------

class TooFewReportsError(MaskPolicyError):
    """Policy comparison needs at least two reports."""
