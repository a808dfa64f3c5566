"""Exception types shared across the package."""


class RingAgeError(Exception):
    """Base class for all package errors."""


class ConfigError(RingAgeError, ValueError):
    """Malformed or out-of-range configuration."""


class DomainError(RingAgeError, ValueError):
    """Argument outside the domain of an operation (negative time, bad k, ...)."""


class UndefinedStatistic(RingAgeError):
    """A statistic was requested that the collected data cannot define."""


class InsufficientData(UndefinedStatistic):
    pass
