class DatasetError(Exception):
    """Base exception for image, corpus and noise errors."""
    pass


class ImageFormatError(DatasetError):
    """Exception raised when an image file cannot be decoded or encoded."""
    pass


class MalformedHeaderError(ImageFormatError):
    """Exception raised when a netpbm header is missing or unparsable."""
    pass


class UnsupportedMaxvalError(ImageFormatError):
    """Exception raised for netpbm files whose maxval is not 255."""
    pass


class TruncatedImageError(ImageFormatError):
    """Exception raised when the pixel data is shorter than the header announces."""
    pass


class EmptyCorpusError(DatasetError):
    """Exception raised when a corpus would contain no images."""
    pass


class PatchSizeError(DatasetError):
    """Exception raised when a patch does not fit inside its source image."""
    pass


class InvalidPatchError(DatasetError):
    """Exception raised when an image patch violates its range or shape invariants."""
    pass


class InvalidNoiseSpecError(DatasetError):
    """Exception raised for negative, non-finite or unparsable noise levels."""
    pass


class EmptyTensorError(DatasetError):
    """Exception raised when a statistic is requested for an empty tensor."""
    pass
