"""Exception hierarchy shared across the engine.

Each class maps to one CLI exit code so failures stay diagnosable from
shell scripts: usage 2, tensor I/O 3, config/shape 4, internal 5.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(EngineError):
    """Bad command-line arguments or unparseable flag values (exit 2)."""


class TensorFormatError(EngineError):
    """Malformed, truncated, or otherwise invalid tensor bytes (exit 3)."""


class MissingEntryError(TensorFormatError):
    """A required named entry is absent from an archive (exit 3)."""


class ConfigError(EngineError):
    """Inconsistent configuration or tensor shapes (exit 4)."""


class InternalError(EngineError):
    """An invariant the engine guarantees was violated (exit 5)."""
