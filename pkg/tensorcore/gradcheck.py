import logging
from typing import Iterable, Optional

import numpy as np

from .graph import Graph, Node, grad

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5


def gradcheck(
    graph: Graph,
    leaf: Node,
    eps: float = DEFAULT_EPS,
    output: Optional[Node] = None,
    coords: Optional[Iterable[int]] = None,
) -> float:
    """Compare the analytic gradient of a leaf against central differences.

    Args:
        graph: Recorded graph with a scalar output
        leaf: Leaf to perturb
        eps: Finite-difference step
        output: Scalar node to differentiate (defaults to the last node)
        coords: Flat indices to check (all elements when omitted)

    Returns:
        max |analytic - numeric| / max(1, |analytic|) over the checked elements
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    analytic = grad(graph, [leaf], output)[0].ravel()
    base = leaf.value.ravel()
    indices = range(base.size) if coords is None else coords

    worst = 0.0
    for index in indices:
        plus = base.copy()
        minus = base.copy()
        plus[index] += eps
        minus[index] -= eps
        f_plus = float(graph.replay({leaf.index: plus.reshape(leaf.shape)}, output))
        f_minus = float(graph.replay({leaf.index: minus.reshape(leaf.shape)}, output))
        numeric = (f_plus - f_minus) / (2.0 * eps)
        error = abs(analytic[index] - numeric) / max(1.0, abs(analytic[index]))
        worst = max(worst, error)

    logger.debug(f"gradcheck on leaf {leaf.index} ({leaf.name}): max relative error {worst:.3e}")
    return worst
