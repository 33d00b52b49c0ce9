"""1-bit base-station receive chain.

Channel estimation by pilot correlation, linear-combining soft detection,
minimum-distance demapping against per-symbol centroids, SER measurement and
the composite-pilot MSE (PMSE) statistic that the power controllers consume.

Arrays may carry leading batch axes (one entry per Monte-Carlo trial).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .channel import apply_uplink, rayleigh_channel
from .numerics import RngLike, RngStream, as_generator, lin2db, quantize_1bit
from .waveforms import Constellation

__all__ = [
    "DegenerateEstimateError",
    "SoftSymbols",
    "CentroidSet",
    "PmseEstimate",
    "SerCounter",
    "estimate_channel",
    "soft_detect",
    "transmit_block",
    "detect_batch",
    "estimate_centroids",
    "min_distance_detect",
    "measure_ser",
    "ser_by_class",
    "pooled_ser",
    "pmse_samples",
    "estimate_pmse",
    "differential_pmse",
    "iter_chunks",
    "CHUNK_TRIALS",
]

# Trials per RNG sub-stream. Part of the reproducibility contract: changing it
# changes every Monte-Carlo result.
CHUNK_TRIALS = 50


class DegenerateEstimateError(ValueError):
    """A combiner or PMSE estimate collapsed to the zero vector."""


def iter_chunks(trials: int, rng: RngLike) -> Iterator[tuple[int, np.random.Generator]]:
    """Split ``trials`` into fixed-size chunks, each with its own generator.

    With an :class:`RngStream` chunk ``c`` draws from ``rng.child(c)``, so
    results do not depend on how chunks are scheduled. A bare Generator is
    consumed sequentially.
    """
    n_chunks = -(-int(trials) // CHUNK_TRIALS)
    for c in range(n_chunks):
        n = min(CHUNK_TRIALS, trials - c * CHUNK_TRIALS)
        gen = rng.child(c).generator if isinstance(rng, RngStream) else as_generator(rng)
        yield n, gen


def estimate_channel(r_p: np.ndarray, pilot: np.ndarray) -> np.ndarray:
    """Least-squares channel estimate up to scale: ``h_hat = R_p p``."""
    r_p = np.asarray(r_p)
    pilot = np.asarray(pilot)
    if r_p.shape[-1] != pilot.shape[-1]:
        raise ValueError(f"pilot length {pilot.shape[-1]} does not match {r_p.shape[-1]} received columns")
    if pilot.ndim == 1:
        return r_p @ pilot
    return np.einsum("...mt,...t->...m", r_p, pilot)


@dataclass(frozen=True)
class SoftSymbols:
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[-1]


def soft_detect(r: np.ndarray, h_hat: np.ndarray) -> SoftSymbols:
    """Combine ``psi * R^H h_hat`` with ``psi > 0`` chosen so ``||x_hat||^2 = N``."""
    r = np.asarray(r)
    h_hat = np.asarray(h_hat)
    if r.shape[-2] != h_hat.shape[-1]:
        raise ValueError(f"channel estimate length {h_hat.shape[-1]} does not match {r.shape[-2]} antennas")
    z = np.einsum("...mn,...m->...n", np.conj(r), h_hat)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateEstimateError("combiner output R^H h_hat is identically zero")
    N = z.shape[-1]
    return SoftSymbols(z * (np.sqrt(N) / norm))


def transmit_block(h, pilot, data, rho_db: float, rng: RngLike, quantize: bool = True):
    """One coherence block: pilot then data over the same channel.

    ``pilot`` already carries its per-level amplitudes; ``data`` (unit
    average energy) is sent at ``rho_db``. Returns ``(R_p, R_d)``, the
    quantized (or, with ``quantize=False``, raw) received pilot and data.
    """
    pilot = np.asarray(pilot, dtype=complex)
    data = np.asarray(data, dtype=complex) * np.sqrt(10.0 ** (rho_db / 10.0))
    T = pilot.shape[-1]
    pilot = np.broadcast_to(pilot, data.shape[:-1] + (T,))
    y = apply_uplink(h, np.concatenate([pilot, data], axis=-1), 0.0, rng)
    if quantize:
        y = quantize_1bit(y)
    return y[..., :T], y[..., T:]


def detect_batch(n, gen, M, rho_db, constellation, pilot, n_data, quantize=True):
    """``n`` independent blocks through the full chain: ``(tx indices, soft symbols)``."""
    h = rayleigh_channel(M, gen, batch=(n,))
    idx = gen.integers(0, constellation.order, size=(n, n_data))
    r_p, r_d = transmit_block(h, pilot, constellation.points[idx], rho_db, gen, quantize)
    soft = soft_detect(r_d, estimate_channel(r_p, pilot))
    return idx, soft.values


@dataclass(frozen=True)
class CentroidSet:
    """Expected soft estimate per transmitted symbol at one operating point."""

    points: np.ndarray
    rho_db: float = float("nan")
    M: int = 0

    @property
    def order(self) -> int:
        return self.points.size


def estimate_centroids(
    M: int,
    rho_db: float,
    constellation: Constellation,
    trials: int,
    rng: RngLike,
    pilot: np.ndarray,
    n_data: int = 100,
    quantize: bool = True,
) -> CentroidSet:
    """Per-symbol mean of the soft estimates over fresh channel/noise draws.

    ``pilot`` is the transmitted pilot including amplitudes, as used in the
    experiment the centroids are meant for.
    """
    if trials < 1000:
        raise ValueError(f"centroid estimation needs >= 1000 trials, got {trials}")
    K = constellation.order
    acc = np.zeros(K, dtype=complex)
    cnt = np.zeros(K)
    for n, gen in iter_chunks(trials, rng):
        idx, xh = detect_batch(n, gen, M, rho_db, constellation, pilot, n_data, quantize)
        flat, vals = idx.ravel(), xh.ravel()
        acc += np.bincount(flat, weights=vals.real, minlength=K) + 1j * np.bincount(flat, weights=vals.imag, minlength=K)
        cnt += np.bincount(flat, minlength=K)
    if np.any(cnt == 0):
        raise ValueError("some symbols never transmitted; increase trials")
    return CentroidSet(acc / cnt, float(rho_db), int(M))


def min_distance_detect(soft, centroids) -> np.ndarray:
    """Index of the nearest centroid; ties go to the lowest index."""
    x = soft.values if isinstance(soft, SoftSymbols) else np.asarray(soft)
    c = centroids.points if isinstance(centroids, CentroidSet) else np.asarray(centroids)
    return np.argmin(np.abs(x[..., None] - c), axis=-1)


class SerCounter:
    """Per-class error/occurrence tallies accumulated over many blocks."""

    def __init__(self, order: int):
        self.order = int(order)
        self.errors = np.zeros(self.order, dtype=np.int64)
        self.totals = np.zeros(self.order, dtype=np.int64)

    def update(self, tx, rx) -> None:
        tx = np.asarray(tx).ravel()
        rx = np.asarray(rx).ravel()
        self.totals += np.bincount(tx, minlength=self.order)
        self.errors += np.bincount(tx[tx != rx], minlength=self.order)

    def per_class(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.totals > 0, self.errors / np.maximum(self.totals, 1), np.nan)

    def ser(self) -> float:
        if self.totals.sum() == 0:
            raise ValueError("no symbols counted")
        return float(np.nanmean(self.per_class()))

    def pooled(self) -> float:
        return float(self.errors.sum() / self.totals.sum())

    @property
    def missing(self) -> np.ndarray:
        return np.flatnonzero(self.totals == 0)


def _counter(tx, rx, order):
    tx = np.asarray(tx)
    rx = np.asarray(rx)
    if tx.shape != rx.shape:
        raise ValueError(f"length mismatch: {tx.shape} vs {rx.shape}")
    if tx.size == 0:
        raise ValueError("empty symbol sequence")
    order = int(order) if order is not None else int(max(tx.max(), rx.max())) + 1
    c = SerCounter(order)
    c.update(tx, rx)
    return c


def ser_by_class(tx, rx, order: int | None = None) -> np.ndarray:
    """Conditional error rate per transmitted class; NaN for absent classes."""
    return _counter(tx, rx, order).per_class()


def measure_ser(tx, rx, order: int | None = None) -> float:
    """Class-averaged SER: mean over classes of ``Pr[rx != tx | tx = class]``.

    Classes that never occur in ``tx`` are excluded from the average (see
    :func:`ser_by_class` to find them).
    """
    return _counter(tx, rx, order).ser()


def pooled_ser(tx, rx) -> float:
    """Fraction of symbols in error, ignoring class balance."""
    tx = np.asarray(tx)
    rx = np.asarray(rx)
    if tx.shape != rx.shape or tx.size == 0:
        raise ValueError("sequences must be non-empty and of equal length")
    return float(np.mean(tx != rx))


@dataclass(frozen=True)
class PmseEstimate:
    composite_power_db: float
    value: float
    n_samples: int = 1


def _normalized_pilot_estimate(r_q: np.ndarray, q: np.ndarray) -> np.ndarray:
    v = np.einsum("...mt,...m->...t", np.conj(r_q), estimate_channel(r_q, q))
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateEstimateError("R_q^H R_q q is the zero vector")
    return v / norm


def pmse_samples(r_q: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-realization ``|| v/||v|| - q/||q|| ||^2`` with ``v = R_q^H R_q q``."""
    q = np.asarray(q, dtype=complex)
    u = _normalized_pilot_estimate(r_q, q)
    w = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.sum(np.abs(u - w) ** 2, axis=-1)


def estimate_pmse(r_q: np.ndarray, q: np.ndarray) -> PmseEstimate:
    """PMSE statistic of one received composite pilot (averaged if batched)."""
    vals = np.atleast_1d(pmse_samples(r_q, q))
    q = np.asarray(q)
    comp = float(lin2db(np.mean(np.abs(q) ** 2)))
    return PmseEstimate(comp, float(np.mean(vals)), int(vals.size))


def differential_pmse(pmse_hi, pmse_lo) -> float:
    """``PMSE(upper pair) - PMSE(lower pair)``; positive means quantization-limited."""
    hi = pmse_hi.value if isinstance(pmse_hi, PmseEstimate) else pmse_hi
    lo = pmse_lo.value if isinstance(pmse_lo, PmseEstimate) else pmse_lo
    return hi - lo
