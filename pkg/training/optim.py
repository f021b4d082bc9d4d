import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from denoiser.arch import ModelParams
from tensorcore.primitives import Tensor

from .exceptions import InvalidTrainConfigError

logger = logging.getLogger(__name__)


class Adam:
    """Adam with a cosine learning-rate schedule over ``total_steps`` updates.

    The optimizer keeps its moment estimates; parameters are never mutated,
    each step returns new ModelParams.
    """

    def __init__(self, learning_rate: float, total_steps: int, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if learning_rate <= 0 or total_steps < 1:
            raise InvalidTrainConfigError(
                f"Adam needs learning_rate > 0 and total_steps >= 1, got {learning_rate} and {total_steps}"
            )
        self.learning_rate = learning_rate
        self.total_steps = total_steps
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps_taken = 0
        self._m: Optional[List[Tensor]] = None
        self._v: Optional[List[Tensor]] = None

    def learning_rate_at(self, step: int) -> float:
        """Cosine decay from ``learning_rate`` at step 0 towards 0 at ``total_steps``."""
        progress = min(step, self.total_steps) / self.total_steps
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))

    def step(self, params: ModelParams, grads: Sequence[Tensor]) -> ModelParams:
        tensors = params.tensors()
        if len(grads) != len(tensors):
            raise ValueError(f"Expected {len(tensors)} gradients, got {len(grads)}")
        if self._m is None:
            self._m = [np.zeros_like(t) for t in tensors]
            self._v = [np.zeros_like(t) for t in tensors]

        lr = self.learning_rate_at(self.steps_taken)
        self.steps_taken += 1
        t = self.steps_taken
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t

        updated = []
        for index, (param, g) in enumerate(zip(tensors, grads)):
            self._m[index] = self.beta1 * self._m[index] + (1.0 - self.beta1) * g
            self._v[index] = self.beta2 * self._v[index] + (1.0 - self.beta2) * g * g
            m_hat = self._m[index] / correction1
            v_hat = self._v[index] / correction2
            updated.append(param - lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return ModelParams.from_tensors(params.arch, updated)
