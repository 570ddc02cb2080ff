"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: validation -> 2, calibration -> 3,
estimation -> 4.
"""


class EntmemError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(EntmemError):
    """Invalid input value, state, or configuration."""

    exit_code = 2


class ConfigurationError(ValidationError):
    """Structurally broken configuration (duplicate settings, bad schema)."""


class CalibrationError(EntmemError):
    """A calibration target cannot be reached within parameter bounds."""

    exit_code = 3

    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter


class EstimationError(EntmemError):
    """An estimator could not produce a value from the given data."""

    exit_code = 4
