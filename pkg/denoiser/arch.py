import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from tensorcore.primitives import as_tensor, frozen

from .exceptions import InvalidArchitectureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArchConfig:
    """Shape of the denoiser: conv+relu, (depth-2) x (conv+relu), conv."""
    depth: int = 5
    width: int = 16
    kernel: int = 3
    channels_in: int = 1
    channels_out: int = 1
    residual: bool = True

    def __post_init__(self):
        if self.depth < 2:
            raise InvalidArchitectureError(f"depth must be at least 2, got {self.depth}")
        if self.width < 1:
            raise InvalidArchitectureError(f"width must be at least 1, got {self.width}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidArchitectureError(f"kernel must be a positive odd size, got {self.kernel}")
        if self.channels_in not in (1, 3):
            raise InvalidArchitectureError(f"channels must be 1 (gray) or 3 (RGB), got {self.channels_in}")
        if self.channels_in != self.channels_out:
            raise InvalidArchitectureError(
                f"channels_in ({self.channels_in}) must equal channels_out ({self.channels_out})"
            )

    def layer_shapes(self) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
        """(kernel shape, bias shape) per layer, input to output."""
        k = self.kernel
        widths = [self.channels_in] + [self.width] * (self.depth - 1) + [self.channels_out]
        return [((c_out, c_in, k, k), (c_out,)) for c_in, c_out in zip(widths[:-1], widths[1:])]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArchConfig":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Denoiser weights: one (kernel, bias) pair per layer, read-only."""
    arch: ArchConfig
    layers: Tuple[Tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        expected = self.arch.layer_shapes()
        if len(self.layers) != len(expected):
            raise InvalidArchitectureError(f"Expected {len(expected)} layers, got {len(self.layers)}")
        layers = []
        for index, ((kernel, bias), (kernel_shape, bias_shape)) in enumerate(zip(self.layers, expected)):
            kernel, bias = as_tensor(kernel, check_finite=True), as_tensor(bias, check_finite=True)
            if kernel.shape != kernel_shape or bias.shape != bias_shape:
                raise InvalidArchitectureError(
                    f"Layer {index}: expected kernel {kernel_shape} and bias {bias_shape}, "
                    f"got {kernel.shape} and {bias.shape}"
                )
            layers.append((frozen(kernel.copy()), frozen(bias.copy())))
        object.__setattr__(self, "layers", tuple(layers))

    def tensors(self) -> List[np.ndarray]:
        """Flat parameter list in the order kernel0, bias0, kernel1, ..."""
        return [t for layer in self.layers for t in layer]

    @classmethod
    def from_tensors(cls, arch: ArchConfig, tensors: Sequence[np.ndarray]) -> "ModelParams":
        tensors = list(tensors)
        return cls(arch, tuple(zip(tensors[0::2], tensors[1::2])))

    @classmethod
    def zeros(cls, arch: ArchConfig) -> "ModelParams":
        return cls(arch, tuple((np.zeros(k), np.zeros(b)) for k, b in arch.layer_shapes()))

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors())

    def same_bytes(self, other: "ModelParams") -> bool:
        return self.arch == other.arch and all(
            a.tobytes() == b.tobytes() for a, b in zip(self.tensors(), other.tensors())
        )

    def map(self, fn, *others: "ModelParams") -> "ModelParams":
        """New params from ``fn`` applied tensor-wise to self and ``others``."""
        columns: Iterable = zip(self.tensors(), *(o.tensors() for o in others))
        return ModelParams.from_tensors(self.arch, [fn(*ts) for ts in columns])
