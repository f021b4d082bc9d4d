import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import EmptyCorpusError, InvalidPatchError, PatchSizeError
from ..rng import Rng, SeedDomain, derive_seed
from ..utils.netpbm import read_image

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm")


@dataclass(frozen=True, eq=False)
class ImagePatch:
    """A clean patch, optionally paired with a noisy observation."""
    clean: np.ndarray
    noisy: Optional[np.ndarray] = None
    noise_sigma: Optional[float] = None

    def __post_init__(self):
        clean = np.asarray(self.clean, dtype=np.float64)
        if clean.ndim != 3:
            raise InvalidPatchError(f"Patch must be C x H x W, got shape {clean.shape}")
        if clean.size and (clean.min() < 0.0 or clean.max() > 1.0):
            raise InvalidPatchError(f"Clean patch values must lie in [0, 1], got [{clean.min()}, {clean.max()}]")
        object.__setattr__(self, "clean", clean)
        if self.noisy is not None:
            noisy = np.asarray(self.noisy, dtype=np.float64)
            if noisy.shape != clean.shape:
                raise InvalidPatchError(f"Noisy shape {noisy.shape} differs from clean shape {clean.shape}")
            object.__setattr__(self, "noisy", noisy)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.clean.shape

    def with_noise(self, noise: np.ndarray, sigma: Optional[float] = None) -> "ImagePatch":
        return replace(self, noisy=self.clean + noise, noise_sigma=sigma)


def _grid(size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    height, width = size
    yy, xx = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    return yy, xx


def _synth_image(size: Tuple[int, int], rng: Rng) -> np.ndarray:
    """One procedural gray image: oriented ramp, flat shapes and a band-limited texture."""
    yy, xx = _grid(size)

    angle = rng.uniform(high=2.0 * np.pi)
    image = rng.uniform(low=0.5, high=1.5) * (np.cos(angle) * xx + np.sin(angle) * yy)

    for _ in range(1 + rng.integers(4)):
        value = rng.uniform(low=-1.0, high=1.0)
        cy, cx = rng.uniform(), rng.uniform()
        if rng.uniform() < 0.5:
            radius = rng.uniform(low=0.1, high=0.35)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < radius ** 2
        else:
            half_h, half_w = rng.uniform(low=0.08, high=0.3), rng.uniform(low=0.08, high=0.3)
            mask = (np.abs(yy - cy) < half_h) & (np.abs(xx - cx) < half_w)
        image = image + value * mask

    for _ in range(3):
        frequency = rng.uniform(low=2.0, high=6.0)
        orientation = rng.uniform(high=np.pi)
        phase = rng.uniform(high=2.0 * np.pi)
        amplitude = rng.uniform(low=0.05, high=0.2)
        wave = np.cos(orientation) * xx + np.sin(orientation) * yy
        image = image + amplitude * np.sin(2.0 * np.pi * frequency * wave + phase)

    low = rng.uniform(high=0.2)
    high = rng.uniform(low=0.8, high=1.0)
    span = image.max() - image.min()
    if span < 1e-12:
        return np.full(size, 0.5)
    image = low + (high - low) * (image - image.min()) / span
    return np.clip(image, 0.0, 1.0)


def synth_corpus(n: int, size: Union[int, Sequence[int]], seed: int) -> List[ImagePatch]:
    """Deterministic procedural corpus of ``n`` gray images.

    Image ``i`` depends only on (seed, i), so a larger corpus extends a smaller
    one with the same seed.

    Args:
        n: Number of images (>= 1)
        size: Side length or (height, width)
        seed: Corpus seed

    Returns:
        List of clean ImagePatch of shape 1 x H x W
    """
    if n < 1:
        raise EmptyCorpusError(f"Corpus size must be at least 1, got {n}")
    size = (int(size), int(size)) if np.isscalar(size) else tuple(int(d) for d in size)
    if len(size) != 2 or min(size) < 1:
        raise PatchSizeError(f"Image size must be positive (height, width), got {size}")
    logger.info(f"Generating synthetic corpus: {n} images of {size[0]}x{size[1]} (seed {seed})")
    return [
        ImagePatch(_synth_image(size, Rng(derive_seed(seed, SeedDomain.CORPUS, index)))[None])
        for index in range(n)
    ]


def load_corpus_dir(path: Union[str, Path]) -> List[np.ndarray]:
    """Read every PGM/PPM file of a flat directory, in file-name order."""
    directory = Path(path)
    if not directory.is_dir():
        raise EmptyCorpusError(f"Corpus directory does not exist: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise EmptyCorpusError(f"No .pgm/.ppm files in {directory}")
    logger.info(f"Loading {len(files)} images from {directory}")
    return [read_image(p) for p in files]


def extract_patches(images: Sequence[np.ndarray], size: int, count: int, rng: Rng) -> List[ImagePatch]:
    """Crop ``count`` random ``size`` x ``size`` patches from ``images``."""
    if not images:
        raise EmptyCorpusError("Cannot extract patches from an empty image list")
    if count < 1:
        raise EmptyCorpusError(f"Patch count must be at least 1, got {count}")
    for index, image in enumerate(images):
        if image.shape[1] < size or image.shape[2] < size:
            raise PatchSizeError(f"Image {index} of shape {image.shape} is smaller than patch size {size}")
    patches = []
    for _ in range(count):
        image = images[rng.integers(len(images))]
        top = rng.integers(image.shape[1] - size + 1)
        left = rng.integers(image.shape[2] - size + 1)
        patches.append(ImagePatch(image[:, top:top + size, left:left + size].copy()))
    return patches


@dataclass(frozen=True)
class CorpusSource:
    """JSON-safe recipe for rebuilding a corpus inside a worker.

    ``kind`` is ``synth`` (count, size, seed) or ``dir`` (path, size, count,
    seed); directory patches are drawn with a seed derived from ``seed``.
    """
    kind: str = "synth"
    count: int = 64
    size: int = 32
    seed: int = 0
    path: Optional[str] = None
    name: str = field(default="")

    def __post_init__(self):
        if self.kind not in ("synth", "dir"):
            raise EmptyCorpusError(f"Unknown corpus kind {self.kind!r}")
        if self.kind == "dir" and not self.path:
            raise EmptyCorpusError("Directory corpus requires a path")
        if not self.name:
            label = "synth" if self.kind == "synth" else Path(self.path).name
            object.__setattr__(self, "name", label)

    def load(self) -> List[ImagePatch]:
        if self.kind == "synth":
            return synth_corpus(self.count, self.size, self.seed)
        images = load_corpus_dir(self.path)
        return extract_patches(images, self.size, self.count, Rng.derived(self.seed, SeedDomain.PATCHES))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "count": self.count,
            "size": self.size,
            "seed": self.seed,
            "path": self.path,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CorpusSource":
        return cls(**data)
