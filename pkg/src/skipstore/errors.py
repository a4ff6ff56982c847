"""Exception hierarchy for the store."""


class StoreError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(StoreError):
    """Schema violation: mixed value kinds, unknown field, duplicate names."""


class DataError(StoreError):
    """Bad input data: CSV parse failures, type mismatches."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ParseError(StoreError):
    """SQL syntax or semantic error, with a character position."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position

    def __str__(self):
        base = super().__str__()
        if self.position is not None:
            return f"{base} (at position {self.position})"
        return base


class UnsupportedQueryError(StoreError):
    """Query is syntactically valid but outside the supported subset."""


class FormatError(StoreError):
    """Base for shard-file parse failures."""


class MagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FormatError):
    """Unsupported format version."""


class TruncatedError(FormatError):
    """File ended before the structure was complete."""


class ChecksumError(FormatError):
    """Stored checksum does not match file contents."""


class PartialResultError(StoreError):
    """Distributed execution lost a shard (both replicas failed)."""

    def __init__(self, message, shard_ids=()):
        super().__init__(message)
        self.shard_ids = tuple(shard_ids)


class InternalError(StoreError):
    """Invariant violation that should never happen."""
