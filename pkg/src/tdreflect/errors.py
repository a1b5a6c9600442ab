"""Exception hierarchy shared by all modules."""


class TdReflectError(Exception):
    """Base class for library errors."""


class DomainOfDefinitionError(TdReflectError, ValueError):
    """Time outside ``[0, T]`` or a point outside the admissible set."""


class RegionError(TdReflectError, ValueError):
    """A field was evaluated outside its evaluation region."""


class ParameterError(TdReflectError, ValueError):
    pass


class PreconditionError(TdReflectError, ValueError):
    pass


class InitialConditionError(TdReflectError, ValueError):
    pass


class StiffnessError(TdReflectError, RuntimeError):
    """Explicit penalty integration blew up; increase the stiffness safety factor."""


class ConvergenceError(TdReflectError, RuntimeError):
    """The epsilon schedule was exhausted without meeting the tolerances."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class DivergenceError(TdReflectError, RuntimeError):
    pass


class CflError(TdReflectError, ValueError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class BoundarySolveError(TdReflectError, RuntimeError):
    pass


class EmptyEnsembleError(TdReflectError, RuntimeError):
    pass


class UnsupportedError(TdReflectError, NotImplementedError):
    pass


class ConfigError(TdReflectError, ValueError):
    pass
