"""Exception types shared across the toolkit."""


class ZeroReferenceError(ValueError):
    """Reference signal has no energy after mean removal."""


class DataError(RuntimeError):
    """Corpus or manifest is unreadable, inconsistent, or incomplete."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; a diagnostic checkpoint was written."""

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
