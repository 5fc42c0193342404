"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for generator or sweep configurations that cannot be satisfied."""


class ParseFailure(ValueError):
    """No integer could be extracted from an agent's final answer."""


class AdapterError(RuntimeError):
    """Transport, auth or protocol failure while talking to a model endpoint."""
