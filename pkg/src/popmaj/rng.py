"""Counter-based randomness shared by every stochastic routine in the package.

Draw i of a stream with 64-bit key k is ``mix64(k + (i + 1) * GOLDEN)`` where
``mix64`` is the SplitMix64 finalizer. A stream is just (key, counter), so any
draw can be recomputed from the key alone, and the compiled kernels can produce
the exact same sequence as the Python side. Independent streams for trial j of
an experiment come from ``derive_key(master, j)``; trials therefore reproduce
byte for byte regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_M64 = (1 << 64) - 1

_U64 = numba.uint64


@numba.njit(_U64(_U64), cache=True, nogil=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(_U64(_U64, _U64), cache=True, nogil=True, inline="always")
def stream_draw(key, counter):
    return mix64(key + (counter + np.uint64(1)) * np.uint64(GOLDEN))


@numba.njit(_U64(_U64, _U64), cache=True, nogil=True)
def derive_key_nb(key, index):
    return mix64(key ^ mix64((index + np.uint64(1)) * np.uint64(GOLDEN)))


def _mix64_py(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def stream_draw_py(key: int, counter: int) -> int:
    return _mix64_py((key + (counter + 1) * GOLDEN) & _M64)


def derive_key(key: int, index: int) -> int:
    """Key for substream `index` of the stream identified by `key`."""
    return _mix64_py((key & _M64) ^ _mix64_py(((index + 1) * GOLDEN) & _M64))


@dataclass
class RandomStream:
    """Stateful view over one SplitMix64 counter stream.

    The counter records how many draws were consumed; two streams with the
    same key always agree draw for draw.
    """

    key: int
    counter: int = field(default=0)

    def u64(self) -> int:
        v = stream_draw_py(self.key, self.counter)
        self.counter += 1
        return v

    def bit(self) -> int:
        return self.u64() >> 63

    def uniform(self) -> float:
        # 53 uniform bits in (0, 1]; never 0 so -log(u) is finite
        return ((self.u64() >> 11) + 1) * 2.0**-53

    def exponential(self, rate: float) -> float:
        if rate <= 0:
            raise ValueError("rate must be positive")
        return -math.log(self.uniform()) / rate

    def randrange(self, n: int) -> int:
        """Exactly uniform integer in [0, n) via bitmask rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        mask = (1 << (n - 1).bit_length()) - 1 if n > 1 else 0
        while True:
            v = self.u64() & mask
            if v < n:
                return v

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        out = list(range(n))
        self.shuffle(out)
        return np.asarray(out, dtype=np.int64)

    def split(self, index: int) -> "RandomStream":
        return RandomStream(derive_key(self.key, index))


def as_stream(seed_or_stream) -> RandomStream:
    if isinstance(seed_or_stream, RandomStream):
        return seed_or_stream
    return RandomStream(int(seed_or_stream) & _M64)
