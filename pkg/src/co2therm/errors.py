"""Exception types shared across the package."""


class Co2thermError(Exception):
    """Base class for all errors raised by this package."""


class NetworkError(Co2thermError, ValueError):
    """Invalid zone-network description or decomposition request."""


class ConfigError(Co2thermError, ValueError):
    """Malformed or inconsistent configuration file."""


class DataError(Co2thermError, ValueError):
    """Malformed sensor or dataset input."""
