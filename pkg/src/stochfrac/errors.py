"""Exception hierarchy shared by all modules."""


class StochFracError(Exception):
    """Base class for library errors."""


class ConfigurationError(StochFracError, ValueError):
    """Invalid configuration or parameter set."""


class ArgumentError(StochFracError, ValueError):
    """Invalid argument to an operation (violated precondition)."""


class StateError(StochFracError, ValueError):
    """A state variable left its admissible range."""


class NumericalError(StochFracError, ArithmeticError):
    """A numerical kernel failed (singular system, diverging iteration)."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class NonConvergenceError(NumericalError):
    """The staggered iteration hit its cap; ``last_iterate`` holds the fields."""

    def __init__(self, message, last_iterate=None, **diagnostics):
        super().__init__(message, **diagnostics)
        self.last_iterate = last_iterate


class PackingSaturated(StochFracError, RuntimeError):
    """Particle allocation ran out of attempts before reaching the targets."""

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved
