"""Exception hierarchy shared across the toolkit."""


class SoftPropError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SoftPropError, ValueError):
    """An argument lies outside the operation's domain (negative time, dt <= 0, ...)."""


class ModeError(SoftPropError, ValueError):
    """A Prony series of the wrong mode was passed."""


class FitError(SoftPropError, ValueError):
    """Curve data is unusable for fitting."""


class ConvergenceError(SoftPropError, RuntimeError):
    """An iterative method hit its cap. ``best`` carries the best iterate found."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SpecError(SoftPropError, ValueError):
    """Unsupported or malformed scaffold/protocol description."""


class SolverError(ConvergenceError):
    """Quasi-static Newton solve failed."""


class GeometryError(SoftPropError, RuntimeError):
    """An element collapsed to non-positive length."""


class VisibilityError(SoftPropError, ValueError):
    """Marker is behind the camera or outside the image."""


class EstimationError(SoftPropError, RuntimeError):
    """Pose could not be recovered from the observed corners."""


class TimingError(SoftPropError, ValueError):
    """Timestamps are not uniformly spaced at the camera rate."""


class DivergenceError(SoftPropError, RuntimeError):
    """Training produced a non-finite loss."""


class DatasetError(SoftPropError, ValueError):
    """Dataset is empty, lacks labels, or leaks between splits."""


class ConfigError(SoftPropError, ValueError):
    """Run configuration is malformed. ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
