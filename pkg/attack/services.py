import logging
import math
from typing import List, Tuple

import numpy as np

from denoiser.arch import ModelParams
from denoiser.services.network import check_input, param_leaves, record_forward
from projection.operators import project_l2_ball, project_zero_mean
from tensorcore.graph import Graph, grad
from tensorcore.primitives import Tensor, as_tensor

from .exceptions import AttackDivergenceError, AttackInputError, BudgetSplitError
from .types import AttackConfig, AttackResult, StepKind

logger = logging.getLogger(__name__)


def _check_shapes(y: Tensor, delta: Tensor, x: Tensor) -> None:
    if not y.shape == delta.shape == x.shape:
        raise AttackInputError(
            f"Observation {y.shape}, perturbation {delta.shape} and target {x.shape} must share a shape"
        )


def record_objective(graph: Graph, params: ModelParams, y, delta, x):
    """Record ||f(y + delta) - x||^2 and return (delta leaf, objective node)."""
    y = check_input(params.arch, y)
    delta, x = as_tensor(delta), as_tensor(x)
    _check_shapes(y, delta, x)
    nodes = param_leaves(graph, params)
    delta_leaf = graph.leaf(delta, name="delta")
    observed = graph.add(graph.leaf(y, name="y"), delta_leaf)
    restored = record_forward(graph, params.arch, nodes, observed)
    return delta_leaf, graph.sq_norm(graph.sub(restored, graph.leaf(x, name="x")))


def adv_objective(params: ModelParams, y, delta, x) -> float:
    """Squared reconstruction error ||f(y + delta) - x||^2."""
    graph = Graph()
    _, objective = record_objective(graph, params, y, delta, x)
    return objective.item()


def adv_objective_and_grad(params: ModelParams, y, delta, x) -> Tuple[float, Tensor]:
    """The attack objective and its gradient with respect to delta."""
    graph = Graph()
    delta_leaf, objective = record_objective(graph, params, y, delta, x)
    return objective.item(), grad(graph, [delta_leaf], objective)[0]


def _ascent_step(delta: Tensor, gradient: Tensor, cfg: AttackConfig) -> Tensor:
    if cfg.step_rule.kind is StepKind.RAW:
        return delta + cfg.eta * gradient
    norm = float(np.linalg.norm(gradient))
    if norm == 0.0:
        return delta
    return delta + (cfg.eta / norm) * gradient


def obsatk(params: ModelParams, x, y, cfg: AttackConfig) -> AttackResult:
    """Zero-mean projected gradient ascent on the reconstruction error.

    Starting from delta = 0, each of the ``cfg.iters`` steps moves up the
    gradient of ||f(y + delta) - x||^2, removes the mean and rescales into the
    rho-ball. The observation y + delta is clipped to [p_min, p_max] once,
    after the loop.

    Args:
        params: Denoiser under attack
        x: Clean image
        y: Noisy observation inside [p_min, p_max]
        cfg: Budget, iterations and step rule

    Returns:
        AttackResult with post-clip and pre-clip perturbations and the
        objective trace (iters + 1 values)

    Raises:
        AttackInputError: shape mismatch or y outside the pixel range
        AttackDivergenceError: non-finite objective or gradient
    """
    y, x = as_tensor(y), as_tensor(x)
    if y.shape != x.shape:
        raise AttackInputError(f"Observation {y.shape} and clean image {x.shape} must share a shape")
    if y.size and (y.min() < cfg.p_min or y.max() > cfg.p_max):
        raise AttackInputError(
            f"Observation values [{y.min()}, {y.max()}] leave the pixel range [{cfg.p_min}, {cfg.p_max}]"
        )

    delta = np.zeros_like(y)
    value, gradient = adv_objective_and_grad(params, y, delta, x)
    trace: List[float] = [value]
    for iteration in range(1, cfg.iters + 1):
        if not (math.isfinite(value) and np.all(np.isfinite(gradient))):
            raise AttackDivergenceError(f"Attack objective diverged at iteration {iteration - 1}", iteration - 1)
        delta = project_l2_ball(project_zero_mean(_ascent_step(delta, gradient, cfg)), cfg.rho)
        if iteration < cfg.iters:
            value, gradient = adv_objective_and_grad(params, y, delta, x)
        else:
            value = adv_objective(params, y, delta, x)
        trace.append(value)
    if not math.isfinite(value):
        raise AttackDivergenceError(f"Attack objective diverged at iteration {cfg.iters}", cfg.iters)

    clipped = np.clip(y + delta, cfg.p_min, cfg.p_max) - y
    logger.debug(
        f"obsatk: rho {cfg.rho:.4g}, {cfg.iters} steps, objective {trace[0]:.4g} -> {trace[-1]:.4g}"
    )
    return AttackResult(delta=clipped, pre_clip_delta=delta, objective_trace=tuple(trace))


def budget_split(eps_hat: float, rho_over_sqrt_m: float) -> float:
    """Base Gaussian level sigma = eps_hat - rho/sqrt(m) for an attacked column.

    Raises:
        BudgetSplitError: negative levels or rho/sqrt(m) > eps_hat
    """
    eps_hat, share = float(eps_hat), float(rho_over_sqrt_m)
    if eps_hat < 0 or share < 0:
        raise BudgetSplitError(f"Noise levels must be non-negative, got eps_hat={eps_hat}, rho/sqrt(m)={share}")
    if share > eps_hat:
        raise BudgetSplitError(f"Adversarial share {share:.6g} exceeds the noise level eps_hat={eps_hat:.6g}")
    return eps_hat - share


def check_constraints(result: AttackResult, rho: float, mean_tol: float, norm_rel_tol: float) -> bool:
    """Whether the pre-clip perturbation is zero-mean and inside the rho-ball."""
    return (abs(result.pre_clip_mean) < mean_tol * max(1.0, rho)
            and float(np.linalg.norm(result.pre_clip_delta)) <= rho * (1.0 + norm_rel_tol)
            and result.norm <= rho * (1.0 + norm_rel_tol))
