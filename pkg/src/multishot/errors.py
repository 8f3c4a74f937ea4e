"""Exception types raised across the library."""


class MultishotError(Exception):
    """Base class for all errors raised by this package."""


class EmptyLayoutError(MultishotError):
    """A token layout was built from an empty shot list."""


class InvalidShotSpecError(MultishotError):
    """A shot spec has a non-positive frame or token count."""


class IndexOutOfBoundsError(MultishotError):
    """A token, frame, or shot index falls outside its valid range."""


class InvalidSummaryIndexError(MultishotError):
    """A summary-token selection is invalid for the given layout."""


class EmptyInputError(MultishotError):
    """An operation received an empty vector or signal."""


class NonFiniteInputError(MultishotError):
    """An operation received NaN or infinite values."""


class ShapeMismatchError(MultishotError):
    """Matrix or mask shapes are inconsistent."""


class EmptyAttentionRowError(MultishotError):
    """A query row has no allowed keys; indicates a plan or mask bug."""


class LayoutMismatchError(MultishotError):
    """Video and prompt layouts disagree, or a prompt layout is malformed."""


class UnrepresentableAsMaskError(MultishotError):
    """A plan with duplicated keys cannot be expressed as a boolean mask."""


class PlanLayoutMismatchError(MultishotError):
    """Matrices do not match the token layout a plan was built for."""


class FrameCountMismatchError(MultishotError):
    """Two cut lists disagree on the total frame count."""


class DegenerateGroupError(MultishotError):
    """A consistency group contains fewer than two shots."""


class TooFewFramesError(MultishotError):
    """Intra-shot consistency needs at least two frames."""


class MalformedPromptError(MultishotError):
    """Serialized hierarchical prompt text cannot be parsed."""


class DelimiterCollisionError(MultishotError):
    """A prompt field contains the shot-cut delimiter literal."""


class ConfigTooLargeError(MultishotError):
    """A benchmark config exceeds the dense-baseline size guard."""
