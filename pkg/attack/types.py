import enum
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from projection.operators import check_rho

from .exceptions import AttackInputError


class StepKind(str, enum.Enum):
    NORMALIZED_L2 = "normalized_l2"
    RAW = "raw"


@dataclass(frozen=True)
class StepRule:
    """Ascent step: ``normalized_l2`` moves eta along grad/||grad||, ``raw`` moves eta * grad.

    ``eta=None`` means 2 * rho / T and is only allowed for ``normalized_l2``.
    """
    kind: StepKind = StepKind.NORMALIZED_L2
    eta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StepKind(self.kind))
        if self.kind is StepKind.RAW and self.eta is None:
            raise AttackInputError("The raw step rule needs an explicit step size eta")
        if self.eta is not None and (not math.isfinite(self.eta) or self.eta < 0):
            raise AttackInputError(f"Step size must be finite and non-negative, got {self.eta}")

    @classmethod
    def normalized_l2(cls, eta: Optional[float] = None) -> "StepRule":
        return cls(StepKind.NORMALIZED_L2, eta)

    @classmethod
    def raw(cls, eta: float) -> "StepRule":
        return cls(StepKind.RAW, eta)


@dataclass(frozen=True)
class AttackConfig:
    """Budget and loop settings of one attack; ``rho`` is an absolute L2 norm."""
    rho: float
    iters: int = 5
    step_rule: StepRule = field(default_factory=StepRule)
    p_min: float = 0.0
    p_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rho", check_rho(self.rho))
        if self.iters < 1:
            raise AttackInputError(f"Attack needs at least one iteration, got {self.iters}")
        if not self.p_min < self.p_max:
            raise AttackInputError(f"Pixel range must satisfy p_min < p_max, got [{self.p_min}, {self.p_max}]")

    @classmethod
    def per_pixel(cls, rho_over_sqrt_m: float, m: int, **kwargs) -> "AttackConfig":
        """Config whose budget is ``rho_over_sqrt_m`` per pixel for ``m`` elements."""
        return cls(rho=float(rho_over_sqrt_m) * math.sqrt(m), **kwargs)

    @property
    def eta(self) -> float:
        if self.step_rule.eta is not None:
            return self.step_rule.eta
        return 2.0 * self.rho / self.iters

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho,
            "iters": self.iters,
            "step_rule": self.step_rule.kind.value,
            "eta": self.step_rule.eta,
            "p_min": self.p_min,
            "p_max": self.p_max,
        }


@dataclass(frozen=True, eq=False)
class AttackResult:
    """Post-clip and pre-clip perturbations plus the objective after each step.

    ``objective_trace[0]`` is the objective at delta = 0; entry t follows step t
    (before the final clip).
    """
    delta: np.ndarray
    pre_clip_delta: np.ndarray
    objective_trace: Tuple[float, ...]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))

    @property
    def pre_clip_mean(self) -> float:
        return float(self.pre_clip_delta.mean())
