"""Exception types shared across the package."""


class KGCascadeError(Exception):
    """Base class for all library errors."""


class DatasetError(KGCascadeError):
    """Malformed or inconsistent dataset files."""


class FormatError(KGCascadeError):
    """Corrupt or mismatched binary artifact (score matrix, checkpoint)."""


class AlignmentError(KGCascadeError):
    """Score matrices or queries that should be key-aligned are not."""


class TrainingDivergedError(KGCascadeError):
    """Non-finite loss encountered during an optimization loop."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
