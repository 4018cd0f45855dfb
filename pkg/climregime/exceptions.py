"""Error hierarchy shared by every climregime module.

The CLI maps each family onto a process exit code: configuration problems
exit with 1, data problems with 2, numerical failures with 3.
"""


class ClimRegimeError(Exception):
    """Base class for all domain errors."""

    exit_code = 1


class ConfigError(ClimRegimeError, ValueError):
    """Invalid configuration or command-line usage."""

    exit_code = 1


class DataError(ClimRegimeError, ValueError):
    """Malformed, inconsistent or insufficient input data."""

    exit_code = 2


class NumericalError(ClimRegimeError, ArithmeticError):
    """Non-finite values or an impossible numerical state."""

    exit_code = 3
