"""Exception types shared across the package."""


class OdesurvError(Exception):
    """Base class for package-specific errors."""


class ShapeError(OdesurvError, ValueError):
    """An array argument has the wrong length or dimensions."""


class ConfigError(OdesurvError, ValueError):
    """A configuration value or combination is invalid."""


class DataLoadError(OdesurvError, ValueError):
    """A data file could not be parsed."""


class UndefinedMetricError(OdesurvError, ValueError):
    """A metric has no value on the given data (e.g. zero comparable pairs)."""


class DivergenceError(OdesurvError, ArithmeticError):
    """A solve produced a non-finite state component."""

    def __init__(self, message, step=None, component_indices=None):
        super().__init__(message)
        self.step = step
        self.component_indices = component_indices


class ConvergenceError(OdesurvError, ArithmeticError):
    """An adaptive solve exhausted its step budget before reaching the end time."""
