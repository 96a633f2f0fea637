class SrnPoseError(Exception):
    """Base class for every error raised by srnpose."""


class ShapeError(SrnPoseError, ValueError):
    """An operation received operands whose shapes do not conform."""

    def __init__(self, message: str, op: str = '', left: tuple = (), right: tuple = ()) -> None:
        super().__init__(message)
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)


class BackwardError(SrnPoseError):
    pass


class CrossSampleError(BackwardError):
    pass


class NonFiniteError(SrnPoseError, FloatingPointError):
    def __init__(self, message: str, name: str = '') -> None:
        super().__init__(message)
        self.name = name


class TrainingError(NonFiniteError):
    """Training hit a non-finite loss; carries where it happened."""

    def __init__(self, message: str, epoch: int, instance: int, pose: list[float],
                 history: list[float] | None = None) -> None:
        super().__init__(message)
        self.epoch = epoch
        self.instance = instance
        self.pose = pose
        self.history = history or []


class AdaptationError(NonFiniteError):
    def __init__(self, message: str, history: list[float]) -> None:
        super().__init__(message)
        self.history = history


class PoseEstimationError(SrnPoseError):
    """Every refinement lane failed; `diagnostics` has one entry per lane."""

    def __init__(self, message: str, diagnostics: list[dict]) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class DatasetFormatError(SrnPoseError, ValueError):
    pass


class CheckpointError(SrnPoseError):
    pass


class CheckpointVersionError(CheckpointError):
    def __init__(self, message: str, found: int, expected: int) -> None:
        super().__init__(message)
        self.found = found
        self.expected = expected


class ConfigError(SrnPoseError, ValueError):
    pass


class GimbalWarning(UserWarning):
    pass


class PoleClampWarning(UserWarning):
    pass
