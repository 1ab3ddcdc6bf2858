"""Exception types shared across the toolkit."""


class RepscopeError(Exception):
    """Base class for all repscope errors."""


class ConfigError(RepscopeError):
    """Invalid experiment configuration (CLI exit code 2)."""


class DataError(RepscopeError):
    """Missing or unusable dataset (CLI exit code 3)."""


class FormatError(DataError):
    """Malformed on-disk container or dataset file."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FormatError):
    """Container version byte is not supported."""


class UnsupportedDtypeError(FormatError):
    """Dtype code in the file header is not supported."""


class TruncatedPayloadError(FormatError):
    """File ends before the payload declared in the header."""


class LengthMismatchError(FormatError):
    """Declared dimensions do not match the payload length."""


class BadRecordSizeError(FormatError):
    """File size is not a whole number of fixed-size records."""


class DivergenceError(RepscopeError):
    """Training produced a non-finite loss. Carries the epoch index."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class NoUsableRowsError(RepscopeError):
    """Every representation row had zero norm; nothing to cluster."""


class DegenerateCentroidsError(RepscopeError):
    """Two distinct clusters share a centroid while having nonzero scatter."""
