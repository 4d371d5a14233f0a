"""Dense array helpers and the xoshiro256** generator used for every random draw.

Arrays are plain :class:`numpy.ndarray` objects (float32 by default, float64
for gradient checks). Randomness goes through :class:`Xoshiro256` so that a
seed fixes the draw sequence independently of numpy's own generators.
"""

from __future__ import annotations

import math
from typing import Sequence

import numba
import numpy as np

_U64 = np.uint64
_MASK64 = (1 << 64) - 1
_JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)


class ShapeError(ValueError):
    """Raised for empty shapes or non-positive dimensions."""


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


@numba.njit(cache=True)
def _fill_u64(state, out):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    for i in range(out.size):
        x = s1 * _U64(5)
        out[i] = ((x << _U64(7)) | (x >> _U64(57))) * _U64(9)
        t = s1 << _U64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << _U64(45)) | (s3 >> _U64(19))
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


@numba.njit(cache=True)
def _fill_unit(state, out):
    # 53 high bits -> double in [0, 1)
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    for i in range(out.size):
        x = s1 * _U64(5)
        r = ((x << _U64(7)) | (x >> _U64(57))) * _U64(9)
        out[i] = (r >> _U64(11)) * 1.1102230246251565e-16
        t = s1 << _U64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << _U64(45)) | (s3 >> _U64(19))
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


@numba.njit(cache=True)
def _shuffle(state, idx):
    tmp = np.empty(1, np.float64)
    for i in range(idx.size - 1, 0, -1):
        _fill_unit(state, tmp)
        j = int(tmp[0] * (i + 1))
        idx[i], idx[j] = idx[j], idx[i]


class Xoshiro256:
    """xoshiro256** pseudo-random generator seeded through splitmix64.

    The generator owns its 256-bit state; it is not meant to be shared
    between threads. ``jumped(k)`` returns an independent stream that starts
    ``k * 2**128`` draws ahead, which is how init/shuffle/dropout streams are
    separated.
    """

    def __init__(self, seed: int = 0):
        if not 0 <= int(seed) <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        x = self.seed
        words = []
        for _ in range(4):
            x, z = splitmix64(x)
            words.append(z)
        self._state = np.array(words, dtype=np.uint64)

    @classmethod
    def from_state(cls, words: Sequence[int], seed: int = 0) -> "Xoshiro256":
        rng = cls(seed)
        rng._state = np.array([int(w) for w in words], dtype=np.uint64)
        return rng

    @property
    def state(self) -> list[int]:
        return [int(w) for w in self._state]

    def next_uint64(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.uint64)
        _fill_u64(self._state, out)
        return out

    def random(self, shape: int | Sequence[int] = ()) -> np.ndarray:
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        out = np.empty(int(np.prod(shape, dtype=np.int64)), dtype=np.float64)
        _fill_unit(self._state, out)
        return out.reshape(shape)

    def uniform(self, low: float, high: float, shape: int | Sequence[int] = ()) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def normal(self, shape: int | Sequence[int] = ()) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = self.random(2 * ((n + 1) // 2)).reshape(2, -1)
        r = np.sqrt(-2.0 * np.log1p(-u[0]))
        z = np.concatenate([r * np.cos(2 * np.pi * u[1]), r * np.sin(2 * np.pi * u[1])])
        return z[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(int(n), dtype=np.int64)
        _shuffle(self._state, idx)
        return idx

    def jump(self) -> None:
        s = [0, 0, 0, 0]
        for word in _JUMP:
            for b in range(64):
                if (word >> b) & 1:
                    cur = self.state
                    s = [a ^ c for a, c in zip(s, cur)]
                self.next_uint64(1)
        self._state = np.array(s, dtype=np.uint64)

    def jumped(self, k: int = 1) -> "Xoshiro256":
        rng = Xoshiro256.from_state(self.state, self.seed)
        for _ in range(k):
            rng.jump()
        return rng


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if not shape:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise ShapeError(f"every dimension must be >= 1, got {shape}")
    return shape


def tensor_create(shape: Sequence[int], fill: float = 0.0, dtype=np.float32) -> np.ndarray:
    return np.full(_check_shape(shape), fill, dtype=dtype)


def fans(shape: Sequence[int]) -> tuple[int, int]:
    """Fan-in and fan-out for ``(out, in, *kernel)`` shaped weights."""
    receptive = math.prod(shape[2:]) if len(shape) > 2 else 1
    return shape[1] * receptive, shape[0] * receptive


def glorot_uniform_init(shape: Sequence[int], rng: Xoshiro256, dtype=np.float32) -> np.ndarray:
    shape = _check_shape(shape)
    if len(shape) < 2:
        raise ValueError("glorot init needs at least 2 dims; biases are zero-initialized")
    fan_in, fan_out = fans(shape)
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)
