import logging
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
from django.conf import settings

from tensorcore.primitives import Tensor, as_tensor

from . import constants
from .exceptions import DykstraConvergenceError, ProjectionError
from .operators import check_rho, project_l2_ball, project_zero_mean

logger = logging.getLogger(__name__)

Projector = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class DykstraResult:
    point: Tensor
    iterations: int
    residual: float


def dykstra(projectors: Sequence[Projector], start, iters: int, tol: float) -> DykstraResult:
    """Dykstra's alternating projections onto an intersection of convex sets.

    Each set keeps its own correction term, which is what makes the limit the
    nearest point of the intersection rather than just some point in it.

    Args:
        projectors: Euclidean projections onto the individual sets
        start: Point to project
        iters: Maximum number of sweeps (>= 1)
        tol: Stop once a full sweep moves the iterate less than this

    Returns:
        DykstraResult with the final iterate

    Raises:
        DykstraConvergenceError: no sweep moved less than ``tol`` within ``iters``
    """
    if iters < 1 or tol <= 0:
        raise ProjectionError(f"Dykstra needs iters >= 1 and tol > 0, got iters={iters}, tol={tol}")
    x = as_tensor(start).copy()
    corrections = [np.zeros_like(x) for _ in projectors]
    residual = float("inf")
    for iteration in range(1, iters + 1):
        previous = x
        for index, project in enumerate(projectors):
            shifted = x + corrections[index]
            x = project(shifted)
            corrections[index] = shifted - x
        residual = float(np.linalg.norm(x - previous))
        if residual < tol:
            logger.debug(f"Dykstra settled after {iteration} sweeps (residual {residual:.3e})")
            return DykstraResult(x, iteration, residual)
    raise DykstraConvergenceError(
        f"Dykstra did not settle within {iters} sweeps (last residual {residual:.3e})",
        residual=residual,
        iterations=iters,
    )


def dykstra_project(delta, rho: float, iters: Optional[int] = None, tol: Optional[float] = None) -> Tensor:
    """Projection onto the zero-mean hyperplane intersected with the rho-ball via Dykstra.

    Independent of the closed form in :func:`projection.operators.project_feasible`
    and used to check it.
    """
    rho = check_rho(rho)
    iters = iters if iters is not None else getattr(settings, "OBSDN_DYKSTRA_MAX_ITERS", constants.DYKSTRA_MAX_ITERS)
    tol = tol if tol is not None else getattr(settings, "OBSDN_DYKSTRA_TOL", constants.DYKSTRA_TOL)
    projectors = [project_zero_mean, partial(project_l2_ball, rho=rho)]
    return dykstra(projectors, delta, iters, tol).point
