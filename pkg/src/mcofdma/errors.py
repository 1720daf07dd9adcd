"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or unknown configuration key.

    ``key`` names the offending field when one can be identified.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class EnumerationCapError(RuntimeError):
    """An exhaustive search would exceed the configured enumeration cap."""
