class TrainingError(Exception):
    """Base exception for training errors."""
    pass


class EmptyBatchError(TrainingError):
    """Exception raised when a loss is requested for a batch with no pairs."""
    pass


class InvalidTrainConfigError(TrainingError):
    """Exception raised for out-of-range training settings."""
    pass


class TrainingDivergenceError(TrainingError):
    """Exception raised when the loss or the parameters stop being finite."""

    def __init__(self, message, epoch, step):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
