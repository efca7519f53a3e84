"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid static configuration (bad parameter, malformed config file)."""
