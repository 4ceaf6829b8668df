"""Exception types shared across the package."""


class WellEscapeError(Exception):
    """Base class for all package-specific errors."""


class EvaluationError(WellEscapeError):
    """A field evaluation produced a non-finite number.

    Carries the offending point in ``point``.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConstructionError(WellEscapeError):
    """A derived object violates its construction preconditions.

    Raised e.g. when a potential does not meet the flat-boundary matching
    condition required to patch it smoothly on a region.
    """


class SimulationError(WellEscapeError):
    """A trajectory left the representable range (blow-up).

    ``step`` is the index of the Euler step at which the state first
    became non-finite.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigurationError(WellEscapeError):
    """Invalid run configuration (bad key, incompatible meshes, ...)."""


class SolverError(WellEscapeError):
    """A PDE solve became unstable or produced invalid densities."""
