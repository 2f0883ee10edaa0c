"""Exception hierarchy shared by all modules."""


class MdeLabError(Exception):
    """Base class for every error raised by the package."""


class MeasureError(MdeLabError, ValueError):
    pass


class EmptyMeasure(MeasureError):
    pass


class NegativeWeight(MeasureError):
    pass


class MassMismatch(MeasureError):
    pass


class DimensionMismatch(MeasureError):
    pass


class FiberCountMismatch(MeasureError):
    pass


class FiberKindMismatch(MdeLabError, ValueError):
    pass


class SolverFailure(MdeLabError, RuntimeError):
    pass


class EmptySet(MdeLabError, ValueError):
    pass


class UnknownControlPoint(MdeLabError, LookupError):
    pass


class UnknownVelocity(MdeLabError, LookupError):
    pass


class NotAssociated(MdeLabError, ValueError):
    pass


class ConfigError(MdeLabError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class SupportEscapesLattice(MdeLabError, RuntimeError):
    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
