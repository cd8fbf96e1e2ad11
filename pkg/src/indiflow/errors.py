"""Exception types raised across the package."""


class IndiflowError(Exception):
    """Base class for all package errors."""


class DegenerateHeight(IndiflowError):
    """Relative height is at or below zero (or the sensor guard height)."""


class IllConditioned(IndiflowError):
    """Matrix inversion refused: condition estimate above the configured bound."""


class DimensionMismatch(IndiflowError):
    pass


class InsufficientFeatures(IndiflowError):
    pass


class DegeneratePair(IndiflowError):
    """Every candidate feature pair had a near-zero image distance."""


class ConfigInvalid(IndiflowError):
    """Configuration rejected; ``field`` names the offending dotted key path."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericalDivergence(IndiflowError):
    pass


class NonPositiveHeight(IndiflowError):
    pass


class WindowTooSmall(IndiflowError):
    pass


class NoTouchdown(IndiflowError):
    pass
