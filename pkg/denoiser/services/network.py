"""Forward pass, initialization and graph recording for the denoiser."""
import logging
from typing import List, Optional, Tuple

import numpy as np

from dataset.rng import Rng
from tensorcore.graph import Graph, Node
from tensorcore.primitives import Tensor, apply, as_tensor

from ..arch import ArchConfig, ModelParams
from ..exceptions import ChannelMismatchError

logger = logging.getLogger(__name__)

ParamNodes = List[Tuple[Node, Node]]


def init_model(arch: ArchConfig, seed: int) -> ModelParams:
    """Kaiming-initialized parameters: N(0, 2/fan_in) kernels, zero biases.

    Args:
        arch: Architecture to instantiate
        seed: u64 seed of the parameter stream

    Returns:
        New ModelParams; identical (arch, seed) give bit-identical values
    """
    rng = Rng(seed)
    layers = []
    for kernel_shape, bias_shape in arch.layer_shapes():
        _, c_in, k, _ = kernel_shape
        std = np.sqrt(2.0 / (c_in * k * k))
        layers.append((rng.normal(kernel_shape, scale=std), np.zeros(bias_shape)))
    params = ModelParams(arch, tuple(layers))
    logger.debug(f"Initialized denoiser {arch} with {params.num_parameters} parameters (seed {seed})")
    return params


def check_input(arch: ArchConfig, y) -> Tensor:
    y = as_tensor(y)
    if y.ndim != 3 or y.shape[0] != arch.channels_in:
        raise ChannelMismatchError(
            f"Denoiser expects {arch.channels_in} x H x W input, got shape {y.shape}"
        )
    return y


def param_leaves(graph: Graph, params: ModelParams) -> ParamNodes:
    """Record every parameter tensor as a leaf of ``graph``."""
    return [
        (graph.leaf(kernel, name=f"kernel{index}"), graph.leaf(bias, name=f"bias{index}"))
        for index, (kernel, bias) in enumerate(params.layers)
    ]


def record_forward(graph: Graph, arch: ArchConfig, nodes: ParamNodes, y: Node) -> Node:
    """Record x̂ = y - r(y) (or r(y) when not residual) and return its node."""
    if y.value.ndim != 3 or y.shape[0] != arch.channels_in:
        raise ChannelMismatchError(f"Denoiser expects {arch.channels_in} x H x W input, got shape {y.shape}")
    h = y
    last = len(nodes) - 1
    for index, (kernel, bias) in enumerate(nodes):
        h = graph.conv2d(h, kernel, bias)
        if index < last:
            h = graph.relu(h)
    return graph.sub(y, h) if arch.residual else h


def denoise(params: ModelParams, y, graph: Optional[Graph] = None):
    """Apply the denoiser.

    Without ``graph`` this evaluates the network directly and returns a
    tensor. With ``graph`` the parameters and ``y`` are recorded as leaves
    and the output node is returned, ready for :func:`tensorcore.graph.grad`.
    """
    y = check_input(params.arch, y)
    if graph is not None:
        return record_forward(graph, params.arch, param_leaves(graph, params), graph.leaf(y, name="y"))
    h = y
    last = len(params.layers) - 1
    for index, (kernel, bias) in enumerate(params.layers):
        h = apply("conv2d", h, kernel, bias)
        if index < last:
            h = apply("relu", h)
    return apply("sub", y, h) if params.arch.residual else h


def denoise_batch(params: ModelParams, ys) -> List[Tensor]:
    return [denoise(params, y) for y in ys]
