class BeepCountError(Exception):
    """Base class for all errors raised by beepcount."""


class InvalidInputError(BeepCountError, ValueError):
    pass


class ConfigurationError(BeepCountError, ValueError):
    """Protocol, variant and parameters do not form a runnable combination."""


class PhaseCapExceeded(BeepCountError, RuntimeError):
    def __init__(self, message, phases=None):
        super().__init__(message)
        self.phases = phases


class InvariantViolation(BeepCountError, AssertionError):
    """A protocol invariant checked at run time did not hold."""


class NumericalError(BeepCountError, ArithmeticError):
    pass
