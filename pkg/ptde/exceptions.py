# Custom exceptions for the ptde package
# Provides specific error types for different failure scenarios


class PTDEError(Exception):
    """Base exception for all ptde errors."""

    pass


class ShapeError(PTDEError, ValueError):
    """Raised when tensor or network inputs do not conform to an op's shape rule."""

    def __init__(self, op: str, shapes, detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        message = f"{op}: incompatible shapes {list(self.shapes)}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class NonFiniteError(PTDEError, FloatingPointError):
    """Raised when a NaN or Inf value is detected."""

    pass


class GradientError(PTDEError, RuntimeError):
    """Raised for invalid backward calls or missing gradients at an optimizer step."""

    pass


class EnvError(PTDEError, RuntimeError):
    """Base error raised by environments."""

    pass


class InvalidAction(EnvError, ValueError):
    """Raised when a joint action contains an out-of-range index."""

    pass


class EpisodeTerminated(EnvError):
    """Raised when stepping an environment whose episode already ended."""

    pass


class CheckpointError(PTDEError, IOError):
    """Raised when a checkpoint is malformed or lacks required parameters."""

    pass


class DatasetError(PTDEError, IOError):
    """Raised when a distillation dataset file is malformed or was modified."""

    pass


class ConfigError(PTDEError, ValueError):
    """Raised when an experiment configuration fails schema validation."""

    pass


class PrerequisiteError(PTDEError, FileNotFoundError):
    """Raised when a stage needs an artifact an earlier stage did not produce."""

    pass


class ProvenanceError(PTDEError, RuntimeError):
    """Raised when existing artifacts were produced under a different config hash."""

    pass


class TrainingDiverged(NonFiniteError):
    """Raised when a training loss becomes NaN or infinite."""

    pass


class ReportError(PTDEError, FileNotFoundError):
    """Raised when no evaluation artifacts can be found for a report."""

    pass
