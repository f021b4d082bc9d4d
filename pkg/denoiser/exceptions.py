class DenoiserError(Exception):
    """Base exception for denoiser model errors."""
    pass


class InvalidArchitectureError(DenoiserError):
    """Exception raised when an architecture or parameter set is inconsistent."""
    pass


class ChannelMismatchError(DenoiserError):
    """Exception raised when an input's channels do not match the architecture."""
    pass


class CheckpointError(DenoiserError):
    """Base exception for checkpoint persistence errors."""
    pass


class CheckpointIOError(CheckpointError):
    """Exception raised when a checkpoint cannot be read or written."""
    pass


class CheckpointFormatError(CheckpointError):
    """Exception raised for a bad magic or an unparsable checkpoint body."""
    pass


class CheckpointVersionError(CheckpointError):
    """Exception raised for a checkpoint written by an unsupported format version."""
    pass


class CheckpointChecksumError(CheckpointError):
    """Exception raised when the stored CRC32 does not match the file contents."""
    pass
