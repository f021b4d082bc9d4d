"""Training objectives for normal, adversarial and hybrid training.

Every loss is recorded as one graph per batch: the parameter leaves are
shared, each pair contributes its own subgraph, the per-pair terms are summed
in batch order and the sum is scaled by 1/(2N). Adversarial inputs come from
:func:`attack.services.obsatk` run against the current parameters and enter
the graph as constant leaves.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from attack.services import obsatk
from attack.types import AttackConfig
from dataset.services.corpus import ImagePatch
from denoiser.arch import ModelParams
from denoiser.services.network import param_leaves, record_forward
from tensorcore.graph import Graph, Node, grad
from tensorcore.primitives import Tensor

from .config import TrainingMode
from .exceptions import EmptyBatchError, TrainingError

logger = logging.getLogger(__name__)


def hybrid_weights(alpha: float) -> Tuple[float, float]:
    """Weights (1/(1+alpha), alpha/(1+alpha)) of the clean and consistency terms."""
    if alpha < 0:
        raise TrainingError(f"alpha must be >= 0, got {alpha}")
    return 1.0 / (1.0 + alpha), alpha / (1.0 + alpha)


def combine_terms(clean_sq: float, consistency_sq: float, alpha: float) -> float:
    """Per-pair hybrid loss from the two squared distances."""
    w_clean, w_consistency = hybrid_weights(alpha)
    return 0.5 * (w_clean * clean_sq + w_consistency * consistency_sq)


def _pairs(batch: Sequence[ImagePatch]) -> List[Tuple[Tensor, Tensor]]:
    if not batch:
        raise EmptyBatchError("Loss requested for an empty batch")
    pairs = []
    for index, patch in enumerate(batch):
        if patch.noisy is None:
            raise TrainingError(f"Batch entry {index} has no noisy observation")
        pairs.append((patch.clean, patch.noisy))
    return pairs


def adversarial_inputs(
    params: ModelParams,
    batch: Sequence[ImagePatch],
    attack_cfg: AttackConfig,
    threads: int = 1,
) -> List[Tensor]:
    """y' = y + delta* for every pair, attacking the current parameters.

    Pairs are independent; ``threads`` > 1 attacks them concurrently and the
    results keep batch order.
    """
    pairs = _pairs(batch)

    def attack_pair(pair):
        x, y = pair
        return y + obsatk(params, x, y, attack_cfg).delta

    if threads <= 1 or len(pairs) == 1:
        return [attack_pair(pair) for pair in pairs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(attack_pair, pairs))


def build_loss_graph(
    params: ModelParams,
    batch: Sequence[ImagePatch],
    mode: TrainingMode = TrainingMode.NT,
    attack_cfg: Optional[AttackConfig] = None,
    alpha: float = 0.0,
    threads: int = 1,
) -> Tuple[Graph, Node, List[Node]]:
    """Record the batch loss of ``mode``.

    Args:
        params: Current denoiser parameters
        batch: Patches with clean and noisy tensors
        mode: nt, vat or hat
        attack_cfg: Training-time attack (vat and hat)
        alpha: Hybrid coefficient (hat only)
        threads: Worker threads for the per-pair attacks

    Returns:
        (graph, loss node, parameter leaves in ``params.tensors()`` order)
    """
    mode = TrainingMode(mode)
    pairs = _pairs(batch)
    if mode is TrainingMode.NT:
        alpha = 0.0
    if mode is not TrainingMode.NT and attack_cfg is None:
        raise TrainingError(f"Mode {mode.value} needs an attack configuration")
    w_clean, w_consistency = hybrid_weights(alpha)

    inputs = [y for _, y in pairs]
    adversarial: List[Optional[Tensor]] = [None] * len(pairs)
    if mode is TrainingMode.VAT:
        inputs = adversarial_inputs(params, batch, attack_cfg, threads)
    elif mode is TrainingMode.HAT and alpha > 0:
        adversarial = adversarial_inputs(params, batch, attack_cfg, threads)

    graph = Graph()
    nodes = param_leaves(graph, params)
    total = None
    for index, ((x, _), y_in, y_adv) in enumerate(zip(pairs, inputs, adversarial)):
        restored = record_forward(graph, params.arch, nodes, graph.leaf(y_in, name=f"y{index}"))
        term = graph.scale(graph.sq_norm(graph.sub(restored, graph.leaf(x, name=f"x{index}"))), w_clean)
        if y_adv is not None:
            restored_adv = record_forward(graph, params.arch, nodes, graph.leaf(y_adv, name=f"y_adv{index}"))
            term = graph.add(term, graph.scale(graph.sq_norm(graph.sub(restored, restored_adv)), w_consistency))
        total = term if total is None else graph.add(total, term)
    loss = graph.scale(total, 0.5 / len(pairs))
    return graph, loss, [node for pair in nodes for node in pair]


def nt_loss(params: ModelParams, batch: Sequence[ImagePatch]) -> float:
    """Mean over the batch of 0.5 * ||f(y) - x||^2."""
    _, loss, _ = build_loss_graph(params, batch, TrainingMode.NT)
    return loss.item()


def vat_loss(params: ModelParams, batch: Sequence[ImagePatch], attack_cfg: AttackConfig, threads: int = 1) -> float:
    """Mean over the batch of 0.5 * ||f(y') - x||^2 with y' from the attack."""
    _, loss, _ = build_loss_graph(params, batch, TrainingMode.VAT, attack_cfg, threads=threads)
    return loss.item()


def hat_loss(
    params: ModelParams,
    batch: Sequence[ImagePatch],
    attack_cfg: AttackConfig,
    alpha: float,
    threads: int = 1,
) -> float:
    """Hybrid loss: clean reconstruction plus consistency between f(y) and f(y').

    With alpha = 0 no attack runs and the graph is exactly the one nt_loss
    records.
    """
    _, loss, _ = build_loss_graph(params, batch, TrainingMode.HAT, attack_cfg, alpha, threads)
    return loss.item()


def hat_pair_terms(params: ModelParams, x, y, y_adv) -> Tuple[float, float]:
    """The two squared distances ||f(y) - x||^2 and ||f(y) - f(y')||^2 of one pair."""
    graph = Graph()
    nodes = param_leaves(graph, params)
    restored = record_forward(graph, params.arch, nodes, graph.leaf(y))
    restored_adv = record_forward(graph, params.arch, nodes, graph.leaf(y_adv))
    clean_sq = graph.sq_norm(graph.sub(restored, graph.leaf(x))).item()
    consistency_sq = graph.sq_norm(graph.sub(restored, restored_adv)).item()
    return clean_sq, consistency_sq


def loss_and_grads(
    params: ModelParams,
    batch: Sequence[ImagePatch],
    mode: TrainingMode,
    attack_cfg: Optional[AttackConfig] = None,
    alpha: float = 0.0,
    threads: int = 1,
) -> Tuple[float, List[Tensor]]:
    """Batch loss and its gradient for every parameter tensor."""
    graph, loss, leaves = build_loss_graph(params, batch, mode, attack_cfg, alpha, threads)
    grads = grad(graph, leaves, loss)
    logger.debug(f"{TrainingMode(mode).value} loss {loss.item():.6g} on {len(batch)} pairs")
    return loss.item(), grads


def finite_grads(grads: Sequence[Tensor]) -> bool:
    return all(np.all(np.isfinite(g)) for g in grads)
