"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives malformed or out-of-contract input."""


class SingularityError(ValueError):
    """Raised when a resolvent is requested at a spectral point."""


class ConfigError(ValueError):
    """Raised for malformed scenario configuration files."""
