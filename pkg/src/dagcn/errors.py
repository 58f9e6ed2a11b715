"""Exception types shared across the package.

ConfigError / DataError map to CLI exit code 2 (bad user input),
OSError maps to exit code 1 (environment / I-O).
"""


class ConfigError(ValueError):
    """Invalid configuration value or inconsistent shapes."""


class DataError(ValueError):
    """Unusable input data (empty corpus, vocabulary mismatch, ...)."""
