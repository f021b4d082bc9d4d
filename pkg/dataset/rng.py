"""Seeded random streams.

All randomness in the toolkit flows through :class:`Rng`, a lane-parallel
xoshiro256++ generator seeded through splitmix64. Each lane is an independent
xoshiro256++ state; a block of output takes one value from every lane in lane
order, so the stream is fixed by (seed, LANES) alone.

Sub-seeds for independent consumers (model init, corpus images, per-epoch
noise, ...) come from :func:`derive_seed` with a :class:`SeedDomain` tag.
"""
import enum
import logging
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
LANES = 256

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * np.pi
_UNIT = 2.0 ** -53


class SeedDomain(enum.IntEnum):
    """Domain-separation tags for derived seeds (ASCII of the name)."""
    INIT = 0x494E4954
    CORPUS = 0x434F5250
    TRAIN_NOISE = 0x544E4F53
    SHUFFLE = 0x53485546
    VAL_NOISE = 0x564E4F53
    EVAL_NOISE = 0x454E4F53
    TRAIN_REPEAT = 0x54524550
    PATCHES = 0x50415443
    EVAL_CORPUS = 0x45434F52
    ATTACK_NOISE = 0x414E4F53


def splitmix64(state: int) -> Tuple[int, int]:
    """Advance a splitmix64 state.

    Returns:
        (next_state, output)
    """
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, domain: int, *indices: int) -> int:
    """Derive an independent u64 seed from ``seed``, a domain tag and indices."""
    _, seed_key = splitmix64(int(seed) & MASK64)
    _, domain_key = splitmix64(int(domain) & MASK64)
    _, value = splitmix64(seed_key ^ domain_key)
    for index in indices:
        _, value = splitmix64((value + int(index)) & MASK64)
    return value


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Rng:
    """Buffered xoshiro256++ stream over ``LANES`` parallel states.

    The generator is an explicit value owned by its caller; nothing in the
    toolkit keeps a global instance.
    """

    def __init__(self, seed: int, lanes: int = LANES):
        if not 0 <= int(seed) <= MASK64:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.lanes = int(lanes)
        state = self.seed
        words: List[int] = []
        for _ in range(4 * self.lanes):
            state, word = splitmix64(state)
            words.append(word)
        self._state = np.array(words, dtype=np.uint64).reshape(self.lanes, 4).T.copy()
        self._buffer = np.empty(0, dtype=np.uint64)

    def _block(self) -> np.ndarray:
        s0, s1, s2, s3 = self._state
        result = _rotl(s0 + s3, 23) + s0
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._state[3] = _rotl(s3, 45)
        return result

    def next_u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        n = int(n)
        if n < 0:
            raise ValueError(f"Cannot draw a negative number of values ({n})")
        if self._buffer.size < n:
            blocks = -(-(n - self._buffer.size) // self.lanes)
            fresh = [self._block() for _ in range(blocks)]
            self._buffer = np.concatenate([self._buffer] + fresh)
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        """Uniform floats on [low, high) with 53 random mantissa bits."""
        count = 1 if size is None else int(np.prod(size))
        unit = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * _UNIT
        values = low + (high - low) * unit
        return float(values[0]) if size is None else values.reshape(size)

    def normal(self, size=None, scale: float = 1.0):
        """Zero-mean Gaussian floats via Box–Muller, using both outputs of each pair."""
        count = 1 if size is None else int(np.prod(size))
        pairs = -(-count // 2)
        unit = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-unit[0::2]))
        angle = _TWO_PI * unit[1::2]
        values = np.empty(2 * pairs, dtype=np.float64)
        values[0::2] = radius * np.cos(angle)
        values[1::2] = radius * np.sin(angle)
        values = scale * values[:count]
        return float(values[0]) if size is None else values.reshape(size)

    def integers(self, high: int, size=None):
        """Integers on [0, high)."""
        if high < 1:
            raise ValueError(f"Upper bound must be positive, got {high}")
        values = np.minimum(np.floor(self.uniform(size) * high), high - 1)
        return int(values) if size is None else values.astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return np.argsort(self.next_u64(n), kind="stable")

    @classmethod
    def derived(cls, seed: int, domain: int, *indices: int) -> "Rng":
        return cls(derive_seed(seed, domain, *indices))

