class TensorCoreError(Exception):
    """Base exception for tensor and gradient engine errors."""
    pass


class ShapeMismatchError(TensorCoreError):
    """Exception raised when a primitive receives inputs of incompatible shapes."""
    pass


class UnknownPrimitiveError(TensorCoreError):
    """Exception raised when a primitive name is not registered."""
    pass


class GraphError(TensorCoreError):
    """Exception raised for malformed graph construction or queries."""
    pass


class NonScalarOutputError(GraphError):
    """Exception raised when gradients are requested for a non-scalar output."""
    pass


class NotALeafError(GraphError):
    """Exception raised when a gradient is requested with respect to an interior node."""
    pass


class NonFiniteTensorError(TensorCoreError):
    """Exception raised when a tensor read from an I/O path holds NaN or Inf."""
    pass
