"""Exception types shared across the package."""


class AdvflowError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AdvflowError, ValueError):
    """An array argument has the wrong rank, shape, or dtype."""


class FormatError(AdvflowError, ValueError):
    """A serialized container is malformed (bad magic, truncated, size mismatch)."""


class ConfigError(AdvflowError, ValueError):
    """A configuration file or flag set is invalid or contains unknown keys."""


class TrainingDivergedError(AdvflowError, RuntimeError):
    """Training produced a non-finite loss or gradient."""


class EvaluationError(AdvflowError, RuntimeError):
    """An evaluation-time sanity check failed (e.g. a sweep lost monotonicity)."""
