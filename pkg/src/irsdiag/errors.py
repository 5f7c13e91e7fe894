"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class InvalidDimensionError(InvalidInputError):
    """A dimension argument is zero, negative, or inconsistent."""


class ConfigError(ValueError):
    """A configuration file failed to parse or validate.

    The message always names the offending key or the file location.
    """
