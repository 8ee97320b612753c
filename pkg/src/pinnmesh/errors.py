"""Exception types shared across the package."""


class PinnMeshError(Exception):
    """Base class for all package-specific errors."""


class InvalidGeometry(PinnMeshError):
    """Geometry input violates a structural requirement.

    Carries the full list of violations so callers can report all of them
    at once instead of failing on the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class EmptyTrainingSet(PinnMeshError):
    """A regression tree was asked to fit zero samples."""


class EmptyBatch(PinnMeshError):
    """A loss term received an empty point set."""


class NonFiniteLoss(PinnMeshError):
    """A loss evaluation produced NaN or Inf."""


class NonFiniteGradient(PinnMeshError):
    """A gradient evaluation produced NaN or Inf."""


class DivergedIteration(PinnMeshError):
    """The iterative elliptic solver produced non-finite coordinates."""

    def __init__(self, sweep, message=None):
        self.sweep = sweep
        super().__init__(message or f"solver diverged at sweep {sweep}")


class DegenerateCell(PinnMeshError):
    """A quad cell has a repeated vertex or a vanishing edge."""


class MeshFileError(PinnMeshError):
    """A mesh file could not be parsed."""
