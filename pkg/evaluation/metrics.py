import math

import numpy as np

from .exceptions import EvaluationError


def mse(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EvaluationError(f"Cannot compare images of shapes {a.shape} and {b.shape}")
    if a.size == 0:
        raise EvaluationError("Cannot compare empty images")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB.

    Returns ``math.inf`` when the images are identical.
    """
    if peak <= 0:
        raise EvaluationError(f"peak must be positive, got {peak}")
    error = mse(a, b)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / error)
