"""Exception types shared across the package."""


class MMNoiseError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MMNoiseError, ValueError):
    pass


class InfiniteDurationError(MMNoiseError, ValueError):
    pass


class InconsistentMeasurementError(MMNoiseError, ValueError):
    """A measured quantity implies a model parameter outside its domain.

    The offending raw value is kept on ``value``.
    """

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class NumericError(MMNoiseError, ArithmeticError):
    pass


class InsufficientDataError(MMNoiseError, ValueError):
    pass


class DegenerateClusterError(MMNoiseError, ValueError):
    pass


class FormatError(MMNoiseError, ValueError):
    """Malformed input file. ``location`` is a byte offset or line number."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class UsageError(MMNoiseError, ValueError):
    pass


class ConfigurationError(MMNoiseError, ValueError):
    pass


class EncodingSetupError(MMNoiseError, ValueError):
    pass


class InputError(MMNoiseError, ValueError):
    pass
