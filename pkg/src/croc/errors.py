"""Exception types shared across the library and mapped to CLI exit codes."""


class CrocError(Exception):
    """Base class for all library errors."""


class ConfigError(CrocError):
    """Invalid or out-of-range configuration value. CLI exit code 2."""


class DataError(CrocError):
    """Malformed input data: bad indices, shapes, or file contents. CLI exit code 3."""


class NumericError(CrocError):
    """Non-finite value encountered during computation. CLI exit code 4."""
