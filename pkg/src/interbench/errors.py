class InterbenchError(Exception):
    pass


class ConfigError(InterbenchError, ValueError):
    """Invalid configuration; CLI exit code 2."""


class UsageError(InterbenchError, RuntimeError):
    """An API was called out of order or with missing preconditions."""


class DataError(InterbenchError, ValueError):
    """Malformed data file or out-of-range ids."""


class StabilityError(InterbenchError, FloatingPointError):
    """Non-finite values where finite ones are required."""
