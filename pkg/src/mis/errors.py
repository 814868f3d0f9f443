"""Exception types shared across the engine."""


class FormatError(ValueError):
    """A file does not conform to its declared on-disk format."""


class TruncatedFileError(FormatError):
    """A file header or payload ends before the declared length."""


class ValidationError(ValueError):
    """Data parses but violates a structural invariant."""


class DescriptorError(ValueError):
    """A synthetic-scene descriptor is inconsistent."""
