"""Exception types shared across the package."""


class DgmnError(Exception):
    """Base class for all package errors."""


class ShapeError(DgmnError):
    """Tensor extents are incompatible with the requested operation."""


class ConfigError(DgmnError):
    """A configuration value is invalid or inconsistent."""


class GraphError(DgmnError):
    """Misuse of the autodiff graph, e.g. backward called twice."""


class TrainingError(DgmnError):
    """Optimization diverged. Carries the step index where it happened."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step
