"""Exception types raised across the package."""


class SSEPLabError(Exception):
    """Base class for all package errors."""


class InvalidProfileError(SSEPLabError, ValueError):
    pass


class StabilityError(SSEPLabError, ValueError):
    pass


class QuadratureError(SSEPLabError, ArithmeticError):
    pass


class DegenerateDensityError(SSEPLabError, ValueError):
    pass


class MissingCounterError(SSEPLabError, KeyError):
    pass


class ArgumentOrderError(SSEPLabError, ValueError):
    pass


class UnsupportedFunctionError(SSEPLabError, TypeError):
    pass


class ConfigurationError(SSEPLabError, ValueError):
    pass


class SampleSizeError(SSEPLabError, ValueError):
    pass


class JoinError(SSEPLabError, KeyError):
    pass


class DependencyError(SSEPLabError, FileNotFoundError):
    pass


class CorruptedDynamicsError(SSEPLabError, AssertionError):
    """A pathwise identity failed during a simulation run."""

    def __init__(self, message, replica_id=None, time=None):
        super().__init__(f"{message} (replica={replica_id}, t={time})")
        self.replica_id = replica_id
        self.time = time


class TruncationWarning(UserWarning):
    pass


class ConfigError(SSEPLabError, ValueError):
    """Collects every violated constraint found while parsing a config."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{path}: {msg}" for path, msg in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
