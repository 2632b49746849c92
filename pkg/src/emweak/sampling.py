"""Reproducible random variates on counter-based Philox streams.

A stream is addressed by ``(master_seed, stream_index)``: the pair is packed
into the 128-bit Philox key, so streams never overlap and no coordination is
needed between workers. Within a stream the Philox counter gives the draw
position; :meth:`RngStream.at` jumps straight to a counter value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

_U64 = (1 << 64) - 1


class RngStream:
    """One independent random stream. Not safe to share between threads."""

    def __init__(self, master_seed: int, stream_index: int = 0, counter: int = 0):
        if not 0 <= master_seed <= _U64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not 0 <= stream_index <= _U64:
            raise ValueError("stream_index must be a non-negative 64-bit integer")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        key = (self.stream_index << 64) | self.master_seed
        self._bitgen = np.random.Philox(key=key, counter=int(counter))
        self.generator = np.random.Generator(self._bitgen)

    @classmethod
    def at(cls, master_seed: int, stream_index: int, counter: int) -> "RngStream":
        return cls(master_seed, stream_index, counter)

    @property
    def counter(self) -> int:
        """Current Philox block counter (the draw ordinal, in 256-bit blocks).

        ``RngStream.at(seed, index, counter)`` reproduces the continuation exactly
        once the current block is used up (e.g. after a multiple of 4 uniforms).
        """
        words = self._bitgen.state["state"]["counter"]
        return sum(int(w) << (64 * i) for i, w in enumerate(words))

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self.generator.random(shape)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.master_seed}, stream={self.stream_index})"


def gaussian_vector(stream: RngStream, dim: int, variance: float = 1.0, size: Optional[int] = None) -> np.ndarray:
    """I.i.d. ``N(0, variance)`` coordinates; shape ``(dim,)`` or ``(size, dim)``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    shape = (dim,) if size is None else (size, dim)
    return np.sqrt(variance) * stream.standard_normal(shape)


def exponential_inverse_cdf(u, mean: float):
    """Quantile of the exponential law with the given mean; ``u=0`` maps to 0."""
    if not mean > 0:
        raise ValueError(f"mean must be positive, got {mean}")
    return -mean * np.log1p(-np.asarray(u, dtype=float))


def exponential_variate(stream: RngStream, mean: float, size=None):
    if not mean > 0:
        raise ValueError(f"mean must be positive, got {mean}")
    u = stream.uniform(size if size is not None else ())
    out = exponential_inverse_cdf(u, mean)
    return float(out) if size is None else out


@dataclass(frozen=True)
class SupremumSample:
    increment: np.ndarray  # U ~ N(0, t)
    running_max: np.ndarray  # Y, distributed as sup_{s<=t} (a W_s + c s) jointly with U
    scale: float
    drift: float
    duration: float


def running_maximum_from(u, v, a, c, t):
    """Supremum of ``a W_s + c s`` on ``[0, t]`` given ``W_t = u`` and an exponential ``v`` of mean 2t.

    ``Y = (a u + c t + sqrt(a^2 v + (a u + c t)^2)) / 2``.
    """
    y = a * u + c * t
    # hypot keeps sqrt(a^2 v + y^2) >= |y| even when y^2 underflows
    return 0.5 * (y + np.hypot(a * np.sqrt(v), y))


def sample_running_maximum(stream: RngStream, a, c, t: float, size=None) -> SupremumSample:
    """Exact joint draw of ``(W_t, sup_{s<=t}(a W_s + c s))``.

    ``a`` and ``c`` may be arrays broadcastable to ``size`` (one drift per path).
    """
    if not t > 0:
        raise ValueError(f"duration must be positive, got {t}")
    shape = size if size is not None else np.broadcast(np.asarray(a), np.asarray(c)).shape
    u = np.sqrt(t) * stream.standard_normal(shape)
    v = exponential_variate(stream, 2.0 * t, size=shape)
    y = running_maximum_from(u, v, a, c, t)
    return SupremumSample(u, y, a, c, t)
