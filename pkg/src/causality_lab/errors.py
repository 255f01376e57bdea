"""Exception hierarchy shared by every module."""


class CausalityLabError(Exception):
    """Base class for all library errors."""


class InvalidEventError(CausalityLabError, KeyError):
    """An event names atoms that are not in the space."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class InvalidSpaceError(CausalityLabError, ValueError):
    pass


class NullConditioningError(CausalityLabError, ZeroDivisionError):
    """Conditioning on an event of probability zero."""


class InvalidPartitionError(CausalityLabError, ValueError):
    pass


class InvalidGeometryError(CausalityLabError, ValueError):
    """A spacetime precondition (dividing, spacelike, cone overlap...) failed."""


class ArityError(CausalityLabError, ValueError):
    pass


class PreconditionError(CausalityLabError, ValueError):
    pass


class ModelIncompleteError(CausalityLabError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class NoSolutionError(CausalityLabError, RuntimeError):
    """A constraint solver gave up; ``residual`` holds the best residual seen."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class DegenerateDynamicsError(CausalityLabError, ValueError):
    pass


class IncompatibleManifestError(CausalityLabError, ValueError):
    pass


class ConfigError(CausalityLabError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field
