class GtrackError(Exception):
    """Base error for the tracking & counting toolkit."""


class ConfigError(GtrackError, ValueError):
    """Invalid configuration or argument contract (CLI exit code 2)."""


class DataError(GtrackError, ValueError):
    """Invalid, missing or inconsistent data (CLI exit code 3)."""
