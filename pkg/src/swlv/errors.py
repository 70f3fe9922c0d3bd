"""Exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 2, SimulationError and
FormatError -> 3, AnalysisError subclasses -> 4.
"""


class SwlvError(Exception):
    pass


class ConfigError(SwlvError):
    """Invalid configuration. ``key`` names the offending setting."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SimulationError(SwlvError):
    pass


class LookupFailure(SimulationError, KeyError):
    """Unknown or dead entity id."""

    def __str__(self):
        return Exception.__str__(self)


class ShapeError(SwlvError, ValueError):
    pass


class NumericError(SwlvError, ArithmeticError):
    pass


class FormatError(SwlvError):
    """Corrupt checkpoint or snapshot file."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class AnalysisError(SwlvError):
    pass


class DomainError(AnalysisError, ValueError):
    pass


class DivergenceError(AnalysisError):
    def __init__(self, step, message="non-finite state"):
        self.step = step
        super().__init__(f"{message} at integration step {step}")


class DegenerateFitError(AnalysisError):
    pass


class NoCycleError(AnalysisError):
    pass
