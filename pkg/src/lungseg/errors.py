"""Exceptions that carry structured information across module boundaries."""


class SizeMismatchError(ValueError):
    """Raw file length disagrees with the declared image dimensions."""

    def __init__(self, expected_bytes: int, actual_bytes: int):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(
            f"expected {expected_bytes} bytes, got {actual_bytes} "
            "(wrong dimensions or truncated file)")


class UnsupportedFormatError(ValueError):
    """Mask file is not a grayscale PNG or binary PGM."""


class DecodeError(ValueError):
    """Mask file has a recognized format but corrupt contents."""
