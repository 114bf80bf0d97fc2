"""Error types: ExtractError for bad data, ConfigError for bad requests."""


class ExtractError(Exception):
    """Input data violates the extraction contract."""


class ConfigError(ExtractError):
    """The request itself is invalid (bad encoder id, bad arguments)."""
