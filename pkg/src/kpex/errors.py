"""Exception types shared across the package."""


class KpexError(Exception):
    """Base class for errors raised by kpex."""


class ConfigError(KpexError):
    """Invalid or inconsistent run configuration."""


class DataError(KpexError):
    """Malformed or inconsistent dataset content."""


class NumericError(KpexError):
    """Non-finite values encountered where finite math is required."""
