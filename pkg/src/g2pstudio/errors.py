"""Exception taxonomy shared across the toolkit.

Every error raised by the library derives from G2PStudioError so callers can
catch the whole family at the CLI/service boundary.
"""


class G2PStudioError(Exception):
    """Base class for all toolkit errors."""


# --- lexicon ---

class EmptyPronunciation(G2PStudioError):
    """IPA string tokenized to nothing."""


class ParseError(G2PStudioError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class IoError(G2PStudioError):
    """Unreadable or truncated input file."""


class SplitError(G2PStudioError):
    """Train/test split impossible (too few entries)."""


class VocabError(G2PStudioError):
    """Vocabulary cannot be built (empty lexicon)."""


# --- autodiff / models ---

class ShapeError(G2PStudioError):
    """Tensor shapes do not conform."""


class MaskError(G2PStudioError):
    """Attention mask blocks every key for some query."""


class ConfigError(G2PStudioError):
    """Inconsistent genome, vocabulary or run configuration."""


class LossError(G2PStudioError):
    """Loss undefined (e.g. every target position is padding)."""


class NumericalError(G2PStudioError):
    """Non-finite value where a finite one is required."""


class LengthError(G2PStudioError):
    """Sequence exceeds the model's maximum length."""


# --- training / evaluation ---

class TrainingDiverged(G2PStudioError):
    """Loss became NaN; carries the step index."""

    def __init__(self, step: int):
        super().__init__(f"training diverged at step {step}")
        self.step = step


class EvalError(G2PStudioError):
    """Evaluation impossible (empty test set)."""


class ScoreError(G2PStudioError):
    """Scoring impossible (no references)."""


class BreedError(G2PStudioError):
    """Parents belong to different architectures."""


# --- audio ---

class FormatError(G2PStudioError):
    """Unsupported or non-PCM WAV format."""


class EmptyAudio(G2PStudioError):
    """Operation undefined on zero-length audio."""


class NormalizeError(G2PStudioError):
    """Cannot normalize an all-zero waveform."""


# --- service ---

class NotFound(G2PStudioError):
    """Referenced prompt/recording/language does not exist."""


class UnsupportedMedia(G2PStudioError):
    """Request body is not a parseable PCM WAV."""


class RateMismatch(G2PStudioError):
    """Uploaded sample rate differs from the session configuration."""


class ServiceUnavailable(G2PStudioError):
    """No model loaded for the requested operation."""
