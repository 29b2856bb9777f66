"""Exception hierarchy.

Every numerical failure derives from :class:`GeometryError`, which carries the
name of the operation that raised it so command-line front ends can report it.
"""


class GeometryError(Exception):
    """Base class for numerical diagnostics raised by this package."""

    def __init__(self, message: str, operation: str = ""):
        super().__init__(message)
        self.operation = operation

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.operation}: {msg}" if self.operation else msg


class DimensionMismatchError(GeometryError, ValueError):
    pass


class HermiticityError(GeometryError, ValueError):
    """Input expected to be Hermitian has a symmetry violation."""

    def __init__(self, residual: float, tol: float, operation: str = "", name: str = "matrix"):
        super().__init__(
            f"{name} is not Hermitian: max|A - A^H| = {residual:.3e} > {tol:.1e}", operation
        )
        self.residual = residual
        self.name = name


class NegativityError(GeometryError, ValueError):
    """An operator expected to be positive semidefinite has a negative eigenvalue."""

    def __init__(self, eigenvalue: float, tol: float, operation: str = ""):
        super().__init__(f"eigenvalue {eigenvalue:.3e} below -{tol:.1e}", operation)
        self.eigenvalue = eigenvalue


class InvalidStateError(GeometryError, ValueError):
    pass


class NotATangentError(GeometryError, ValueError):
    pass


class RankDeficiencyError(GeometryError, ValueError):
    pass


class RankLossError(GeometryError):
    """Integration drove the smallest retained eigenvalue below threshold."""

    def __init__(self, time: float, eigenvalue: float, threshold: float, operation: str = "evolve"):
        super().__init__(
            f"rank lost at t = {time:.6g}: retained eigenvalue {eigenvalue:.3e} < {threshold:.1e}",
            operation,
        )
        self.time = time
        self.eigenvalue = eigenvalue


class DegenerateSpectrumError(GeometryError):
    pass


class ConditioningError(GeometryError):
    pass


class PlanError(GeometryError, ValueError):
    """A geodesic plan cannot be built or evaluated (e.g. identical endpoints)."""


class BoundaryError(GeometryError):
    """The geodesic evolution operator is singular at the requested parameter."""


class SingularFrameError(GeometryError, ValueError):
    pass


class ConfigError(ValueError):
    """Schema violation in an experiment configuration.

    ``field`` holds a dotted path to the offending entry.
    """

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
