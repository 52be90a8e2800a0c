"""Exception types and warning categories shared across the package."""


class LawqError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LawqError):
    """Input fails a structural precondition (non-finite, empty, wrong rank)."""


class DegenerateInput(LawqError):
    """Input admits no valid quantization (e.g. all weights are zero)."""


class InvalidBits(LawqError):
    """Bit width outside the supported range."""


class TooLarge(LawqError):
    """Problem size exceeds what a brute-force oracle will enumerate."""


class ShapeMismatch(LawqError):
    """Array shapes are inconsistent with each other or with the layer spec."""


class InvalidLabel(LawqError):
    """Class label outside [0, n_classes)."""


class DegenerateBatch(LawqError):
    """Batch too small for batch statistics (size < 2 in training mode)."""


class NonFiniteGradient(LawqError):
    """Gradient contains NaN or Inf."""


class BadMagic(LawqError):
    """File header does not match the expected format."""


class TruncatedPayload(LawqError):
    """File ends before the declared payload is complete."""


class UnsupportedDtype(LawqError):
    """File declares an element type this reader does not handle."""


class VersionMismatch(LawqError):
    """Blob written by an unknown format version."""


class CorruptRecord(LawqError):
    """Blob contents are internally inconsistent or truncated."""


class UnknownKey(LawqError):
    """Config contains a key (or section) that is not part of the schema."""


class BadValue(LawqError):
    """Config value cannot be parsed as the declared type."""


class MissingRequired(LawqError):
    """Config omits a required key."""


class DegenerateCodesWarning(UserWarning):
    """All-zero code vector: the scale is unidentifiable and the layer
    reconstructs to zero."""
