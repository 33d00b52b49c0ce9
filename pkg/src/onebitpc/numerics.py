"""Random streams, complex Gaussian sampling and the 1-bit quantizer.

Grids are plain numpy arrays. Functions that act on a single ``(rows, cols)``
grid also accept stacked grids with leading batch axes so Monte-Carlo loops
can vectorize over trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "RngStream",
    "as_generator",
    "cgauss",
    "sample_cgauss",
    "quantize_1bit",
    "is_quantized",
    "db2lin",
    "lin2db",
]


@dataclass
class RngStream:
    """Reproducible random stream identified by ``(master_seed, stream_id)``.

    ``stream_id`` may be an int or a tuple of ints; tuples address nested
    sub-streams (e.g. ``(grid_key, chunk)``). Streams with different ids are
    statistically independent, and the same id always replays the same
    sequence regardless of what other streams were consumed before it.
    """

    master_seed: int
    stream_id: Union[int, tuple] = 0
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def key(self) -> tuple:
        sid = self.stream_id
        return tuple(int(s) for s in sid) if isinstance(sid, tuple) else (int(sid),)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(int(self.master_seed), spawn_key=self.key)
            self._gen = np.random.Generator(np.random.PCG64(seq))
        return self._gen

    def child(self, *ids: int) -> "RngStream":
        """Independent sub-stream; does not advance this stream."""
        return RngStream(self.master_seed, self.key + tuple(int(i) for i in ids))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def cgauss(shape, rng: RngLike) -> np.ndarray:
    """i.i.d. CN(0, 1) samples of arbitrary shape (variance 1/2 per component)."""
    gen = as_generator(rng)
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    # real and imaginary parts drawn as one block to keep the stream layout fixed
    z = gen.standard_normal(shape + (2,))
    out = z[..., 0] + 1j * z[..., 1]
    out *= np.sqrt(0.5)
    return out


def sample_cgauss(rows: int, cols: int, rng: RngLike) -> np.ndarray:
    """``rows x cols`` grid of i.i.d. CN(0, 1) entries."""
    if rows < 1 or cols < 1:
        raise ValueError(f"grid dimensions must be >= 1, got ({rows}, {cols})")
    return cgauss((int(rows), int(cols)), rng)


def quantize_1bit(y: np.ndarray) -> np.ndarray:
    """Elementwise ``sgn(Re y) + j sgn(Im y)`` with ``sgn(0) = +1``.

    Output entries lie in ``{+-1 +- 1j}``; shape is preserved.
    """
    y = np.asarray(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("quantizer input contains NaN or Inf")
    re = np.where(y.real >= 0, 1.0, -1.0)
    im = np.where(y.imag >= 0, 1.0, -1.0)
    return re + 1j * im


def is_quantized(r: np.ndarray) -> bool:
    r = np.asarray(r)
    return bool(np.all(np.abs(r.real) == 1.0) and np.all(np.abs(r.imag) == 1.0))


def db2lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))
