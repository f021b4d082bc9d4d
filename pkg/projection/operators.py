"""Projections onto the zero-mean hyperplane, the L2 ball and their intersection."""
import logging
import math
from dataclasses import dataclass

import numpy as np

from tensorcore.primitives import Tensor, as_tensor

from .exceptions import EmptyPerturbationError, InvalidBudgetError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PerturbationBudget:
    """L2 budget ``rho`` for a perturbation of ``m`` elements."""
    rho: float
    m: int

    def __post_init__(self):
        check_rho(self.rho)
        if self.m < 1:
            raise EmptyPerturbationError(f"Perturbation must have at least one element, got m={self.m}")

    @classmethod
    def per_pixel(cls, rho_over_sqrt_m: float, m: int) -> "PerturbationBudget":
        """Budget from a per-pixel level: rho = (rho/sqrt(m)) * sqrt(m)."""
        return cls(float(rho_over_sqrt_m) * math.sqrt(m), m)

    @property
    def rho_over_sqrt_m(self) -> float:
        return self.rho / math.sqrt(self.m)

    def contains(self, delta, mean_tol: float, norm_rel_tol: float) -> bool:
        delta = as_tensor(delta)
        return (abs(float(delta.mean())) < mean_tol * max(1.0, self.rho)
                and float(np.linalg.norm(delta)) <= self.rho * (1.0 + norm_rel_tol))


def check_rho(rho: float) -> float:
    rho = float(rho)
    if not math.isfinite(rho) or rho < 0:
        raise InvalidBudgetError(f"Budget rho must be finite and non-negative, got {rho}")
    return rho


def _nonempty(delta) -> Tensor:
    delta = as_tensor(delta)
    if delta.size == 0:
        raise EmptyPerturbationError("Cannot project an empty perturbation")
    return delta


def project_zero_mean(delta) -> Tensor:
    """Project onto {d : mean(d) = 0} by subtracting the mean."""
    delta = _nonempty(delta)
    return delta - delta.mean()


def project_l2_ball(delta, rho: float) -> Tensor:
    """Project onto {d : ||d|| <= rho} by radial rescaling."""
    rho = check_rho(rho)
    delta = as_tensor(delta)
    norm = float(np.linalg.norm(delta))
    if norm <= rho:
        return delta.copy()
    return delta * (rho / norm)


def project_feasible(delta, rho: float) -> Tensor:
    """Exact projection onto the zero-mean hyperplane intersected with the rho-ball.

    The hyperplane step must come first. Rescaling keeps a zero-mean vector
    zero-mean; the reversed order stays feasible but over-shrinks.
    """
    rho = check_rho(rho)
    return project_l2_ball(project_zero_mean(delta), rho)


def project_ball_then_hyperplane(delta, rho: float) -> Tensor:
    """The reversed composition: feasible, but generally not the nearest point."""
    return project_zero_mean(project_l2_ball(_nonempty(delta), rho))
