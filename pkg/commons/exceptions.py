class LaraGenError(Exception):
    """Base class for pipeline failures that are not input validation."""


class ShapeError(LaraGenError):
    pass


class NumericError(LaraGenError):
    pass


class DegenerateInputError(LaraGenError):
    """Raised when a statistic is undefined because an input has zero variance."""


class WindowError(LaraGenError):
    pass


class CheckpointError(LaraGenError):
    pass


class ManifestError(LaraGenError):
    pass


class EvaluationError(LaraGenError):
    pass
