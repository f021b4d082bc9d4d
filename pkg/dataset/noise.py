"""Noise sources and noise-level parsing.

Levels are in [0, 1] pixel units. ``k/255`` strings are accepted wherever a
level is read from text so configs can use 8-bit notation without decimal
drift.
"""
import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import EmptyTensorError, InvalidNoiseSpecError
from .rng import Rng

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class NoiseLevel:
    """A parsed noise level together with the text it came from."""
    value: float
    label: str

    def __float__(self) -> float:
        return self.value

    @property
    def over_255(self) -> float:
        """The level expressed as a numerator over 255."""
        return self.value * 255.0


def parse_noise_level(text: Union[str, float, int, NoiseLevel]) -> NoiseLevel:
    """Parse ``"25/255"``, ``"0.1"`` or a number into a :class:`NoiseLevel`.

    Raises:
        InvalidNoiseSpecError: unparsable, negative or non-finite level
    """
    if isinstance(text, NoiseLevel):
        return text
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        value, label = float(text), repr(float(text))
    else:
        label = str(text).strip()
        try:
            if "/" in label:
                numerator, denominator = label.split("/", 1)
                value = float(Fraction(numerator.strip()) / Fraction(denominator.strip()))
            else:
                value = float(label)
        except (ValueError, ZeroDivisionError):
            raise InvalidNoiseSpecError(f"Cannot parse noise level {label!r}") from None
    if not math.isfinite(value) or value < 0:
        raise InvalidNoiseSpecError(f"Noise level must be finite and non-negative, got {label!r}")
    return NoiseLevel(value, label)


class NoiseKind(str, enum.Enum):
    GAUSSIAN_FIXED = "gaussian_fixed"
    GAUSSIAN_FAMILY = "gaussian_family"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class NoiseSpec:
    """Description of a noise source.

    ``level`` is σ for ``gaussian_fixed``, the family bound ε for
    ``gaussian_family`` (σ ~ U(0, ε) per draw) and the energy level ε̂ for
    ``uniform`` (U(-√3ε̂, √3ε̂)).
    """
    kind: NoiseKind
    level: float

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        level = float(self.level)
        if not math.isfinite(level) or level < 0:
            raise InvalidNoiseSpecError(f"{self.kind.value}: level must be finite and non-negative, got {self.level}")
        object.__setattr__(self, "level", level)

    @classmethod
    def gaussian_fixed(cls, sigma: float) -> "NoiseSpec":
        return cls(NoiseKind.GAUSSIAN_FIXED, float(parse_noise_level(sigma)))

    @classmethod
    def gaussian_family(cls, eps: float) -> "NoiseSpec":
        return cls(NoiseKind.GAUSSIAN_FAMILY, float(parse_noise_level(eps)))

    @classmethod
    def uniform(cls, eps_hat: float) -> "NoiseSpec":
        return cls(NoiseKind.UNIFORM, float(parse_noise_level(eps_hat)))

    def expected_energy_density(self) -> float:
        if self.kind is NoiseKind.GAUSSIAN_FAMILY:
            return self.level ** 2 / 3.0
        return self.level ** 2


def sample_noise_with_sigma(spec: NoiseSpec, shape: Sequence[int], rng: Rng) -> Tuple[np.ndarray, Optional[float]]:
    """Draw one noise tensor and report the Gaussian σ used.

    Returns:
        (noise, sigma) where sigma is None for uniform noise
    """
    shape = tuple(int(d) for d in shape)
    if spec.kind is NoiseKind.GAUSSIAN_FIXED:
        return rng.normal(shape, scale=spec.level), spec.level
    if spec.kind is NoiseKind.GAUSSIAN_FAMILY:
        sigma = rng.uniform(low=0.0, high=spec.level)
        return rng.normal(shape, scale=sigma), sigma
    bound = SQRT3 * spec.level
    return rng.uniform(shape, low=-bound, high=bound), None


def sample_noise(spec: NoiseSpec, shape: Sequence[int], rng: Rng) -> np.ndarray:
    """Draw one noise tensor of ``shape`` from ``spec``."""
    return sample_noise_with_sigma(spec, shape, rng)[0]


def energy_density(v) -> float:
    """Per-element noise power ‖v‖²/m.

    Raises:
        EmptyTensorError: v has no elements
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise EmptyTensorError("Energy density of an empty tensor is undefined")
    return float(np.vdot(v, v) / v.size)
