"""Forward primitives and their vector-Jacobian products.

Tensors are plain float64 numpy arrays. Every primitive is registered under a
name so the graph can record an op by name and replay it later.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import NonFiniteTensorError, ShapeMismatchError, UnknownPrimitiveError

logger = logging.getLogger(__name__)

Tensor = np.ndarray


def as_tensor(value: Any, check_finite: bool = False) -> Tensor:
    """Convert ``value`` to a contiguous float64 array.

    Args:
        value: Array-like input
        check_finite: Reject NaN/Inf (used on I/O paths)

    Returns:
        float64 ndarray
    """
    tensor = np.ascontiguousarray(value, dtype=np.float64)
    if check_finite and not np.all(np.isfinite(tensor)):
        raise NonFiniteTensorError(f"Tensor of shape {tensor.shape} contains NaN or Inf values")
    return tensor


def frozen(tensor: Tensor) -> Tensor:
    """Return a read-only view of ``tensor``."""
    view = tensor.view()
    view.setflags(write=False)
    return view


# -- conv2d helpers ---------------------------------------------------------

def _check_conv_shapes(x: Tensor, kernel: Tensor, bias: Optional[Tensor]) -> None:
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeMismatchError(
            f"conv2d: expected input C_in x H x W and kernel C_out x C_in x k x k, "
            f"got input {x.shape} and kernel {kernel.shape}"
        )
    c_out, c_in, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeMismatchError(f"conv2d: kernel must be square with odd size, got kernel {kernel.shape}")
    if c_in != x.shape[0]:
        raise ShapeMismatchError(
            f"conv2d: input has {x.shape[0]} channels but kernel expects {c_in} "
            f"(input {x.shape}, kernel {kernel.shape})"
        )
    if bias is not None and bias.shape != (c_out,):
        raise ShapeMismatchError(f"conv2d: bias shape {bias.shape} does not match kernel {kernel.shape}")


def _columns(x: Tensor, k: int) -> Tensor:
    """im2col with zero padding (k-1)/2: (C, H, W) -> (C*k*k, H*W)."""
    pad = (k - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))
    channels, height, width = windows.shape[:3]
    return windows.transpose(0, 3, 4, 1, 2).reshape(channels * k * k, height * width)


def conv2d_forward(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    _check_conv_shapes(x, kernel, bias)
    c_out, _, k, _ = kernel.shape
    _, height, width = x.shape
    out = kernel.reshape(c_out, -1) @ _columns(x, k)
    out = out.reshape(c_out, height, width)
    if bias is not None:
        out = out + bias[:, None, None]
    return out


def conv2d_backward_input(grad_out: Tensor, kernel: Tensor) -> Tensor:
    """Adjoint of conv2d with respect to its input."""
    c_out, c_in, k, _ = kernel.shape
    if grad_out.ndim != 3 or grad_out.shape[0] != c_out:
        raise ShapeMismatchError(
            f"conv2d: gradient shape {grad_out.shape} does not match kernel {kernel.shape}"
        )
    _, height, width = grad_out.shape
    flipped = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c_in, -1)
    return (flipped @ _columns(grad_out, k)).reshape(c_in, height, width)


def conv2d_backward_kernel(grad_out: Tensor, x: Tensor, k: int) -> Tensor:
    """Gradient of conv2d with respect to its kernel."""
    c_out = grad_out.shape[0]
    grad = grad_out.reshape(c_out, -1) @ _columns(x, k).T
    return grad.reshape(c_out, x.shape[0], k, k)


# -- registry ---------------------------------------------------------------

ForwardFn = Callable[[Sequence[Tensor], Dict[str, Any]], Tensor]
VjpFn = Callable[[Tensor, Sequence[Tensor], Tensor, Dict[str, Any], Sequence[bool]], List[Optional[Tensor]]]


@dataclass(frozen=True)
class Primitive:
    """A named differentiable operation."""
    name: str
    arity: Sequence[int]
    forward: ForwardFn
    vjp: VjpFn


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{name}: operand shapes differ ({a.shape} vs {b.shape})")


def _conv2d(inputs, attrs):
    bias = inputs[2] if len(inputs) == 3 else None
    return conv2d_forward(inputs[0], inputs[1], bias)


def _conv2d_vjp(grad, inputs, output, attrs, needs):
    x, kernel = inputs[0], inputs[1]
    grads: List[Optional[Tensor]] = [
        conv2d_backward_input(grad, kernel) if needs[0] else None,
        conv2d_backward_kernel(grad, x, kernel.shape[2]) if needs[1] else None,
    ]
    if len(inputs) == 3:
        grads.append(grad.sum(axis=(1, 2)) if needs[2] else None)
    return grads


def _add(inputs, attrs):
    _same_shape("add", inputs[0], inputs[1])
    return inputs[0] + inputs[1]


def _sub(inputs, attrs):
    _same_shape("sub", inputs[0], inputs[1])
    return inputs[0] - inputs[1]


_REGISTRY: Dict[str, Primitive] = {
    p.name: p for p in (
        Primitive("conv2d", (2, 3), _conv2d, _conv2d_vjp),
        Primitive(
            "relu", (1,),
            lambda inputs, attrs: np.maximum(inputs[0], 0.0),
            # subgradient 0 at x == 0
            lambda grad, inputs, output, attrs, needs: [grad * (inputs[0] > 0.0)],
        ),
        Primitive(
            "add", (2,), _add,
            lambda grad, inputs, output, attrs, needs: [grad, grad],
        ),
        Primitive(
            "sub", (2,), _sub,
            lambda grad, inputs, output, attrs, needs: [grad, -grad],
        ),
        Primitive(
            "scale", (1,),
            lambda inputs, attrs: attrs["factor"] * inputs[0],
            lambda grad, inputs, output, attrs, needs: [attrs["factor"] * grad],
        ),
        Primitive(
            "sum", (1,),
            lambda inputs, attrs: np.sum(inputs[0]),
            lambda grad, inputs, output, attrs, needs: [np.full_like(inputs[0], grad)],
        ),
        Primitive(
            "sq_norm", (1,),
            lambda inputs, attrs: np.vdot(inputs[0], inputs[0]),
            lambda grad, inputs, output, attrs, needs: [2.0 * grad * inputs[0]],
        ),
    )
}


def get_primitive(name: str) -> Primitive:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownPrimitiveError(f"Unknown primitive: {name}") from None


def primitive_names() -> List[str]:
    return list(_REGISTRY)


def apply(name: str, *inputs: Any, **attrs: Any) -> Tensor:
    """Evaluate primitive ``name`` on ``inputs`` without recording a graph.

    Args:
        name: Registered primitive name
        *inputs: Input tensors
        **attrs: Primitive attributes (``factor`` for scale)

    Returns:
        Output tensor (0-d array for reductions)
    """
    primitive = get_primitive(name)
    if len(inputs) not in primitive.arity:
        raise ShapeMismatchError(f"{name}: expected {primitive.arity} inputs, got {len(inputs)}")
    tensors = [as_tensor(value) for value in inputs]
    return np.asarray(primitive.forward(tensors, attrs), dtype=np.float64)
