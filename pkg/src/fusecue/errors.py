"""Exception hierarchy shared across the package."""


class FusecueError(Exception):
    """Base class for every error raised by fusecue."""


class InvalidShape(FusecueError, ValueError):
    pass


class InvalidSpec(FusecueError, ValueError):
    pass


class FormatError(FusecueError, ValueError):
    pass


class InvalidCode(FusecueError, ValueError):
    pass


class FrozenViolation(FusecueError, RuntimeError):
    """Raised when a frozen fusion block is asked to train."""


class ManifestError(FusecueError, ValueError):
    pass


class LeakageError(ManifestError):
    """A video id shows up in both splits of one dataset."""


class EmptyDataset(FusecueError, ValueError):
    pass


class DivergenceError(FusecueError, FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class UndefinedMetric(FusecueError, ValueError):
    pass


class IoError(FusecueError, OSError):
    pass
