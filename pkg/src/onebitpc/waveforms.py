"""Pilot and data waveforms: Zadoff-Chu base sequences, square QAM,
the multi-amplitude power ladder and its composite-pilot pairing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import RngLike, as_generator, db2lin, lin2db

__all__ = [
    "Constellation",
    "PilotSpec",
    "CompositePairing",
    "zadoff_chu",
    "qam_constellation",
    "power_levels",
    "composite_pairs",
    "composite_levels",
    "composite_power_db",
    "lower_level_for_composite",
    "build_multiamp_pilot",
    "draw_data_symbols",
]


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % k for k in range(3, math.isqrt(n) + 1, 2))


def zadoff_chu(tau: int, root: int = 1) -> np.ndarray:
    """Zadoff-Chu sequence ``exp(-j pi u n (n+1) / tau)``, ``n = 0..tau-1``.

    Parameters
    ----------
    tau : int
        Sequence length; must be an odd prime.
    root : int
        Root index ``u`` with ``1 <= u < tau``.
    """
    tau, root = int(tau), int(root)
    if tau % 2 == 0 or not _is_prime(tau):
        raise ValueError(f"Zadoff-Chu length must be an odd prime, got {tau}")
    if not 1 <= root < tau or math.gcd(root, tau) != 1:
        raise ValueError(f"root {root} must satisfy 1 <= root < {tau} and be coprime to it")
    n = np.arange(tau)
    # n(n+1) is even, so reduce modulo 2*tau before scaling to keep phases small
    phase = (root * n * (n + 1)) % (2 * tau)
    return np.exp(-1j * np.pi * phase / tau)


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy symbol alphabet; index ``i`` labels ``points[i]``."""

    points: np.ndarray
    name: str = ""

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.order)


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def qam_constellation(order: int) -> Constellation:
    """Square Gray-labeled QAM with unit mean energy (4, 16 or 64 points).

    Label bits split into an in-phase half (high bits) and a quadrature
    half (low bits); each half is Gray coded along its axis.
    """
    if order not in (4, 16, 64):
        raise ValueError(f"unsupported QAM order {order}; expected 4, 16 or 64")
    side = math.isqrt(order)
    k = side.bit_length() - 1
    idx = np.arange(order)
    hi, lo = idx >> k, idx & (side - 1)
    # position along the axis whose Gray code is the label half
    pos_of_code = np.empty(side, dtype=int)
    pos_of_code[_gray(np.arange(side))] = np.arange(side)
    amp = 2 * np.arange(side) - (side - 1)
    pts = amp[pos_of_code[hi]] + 1j * amp[pos_of_code[lo]]
    pts = pts / np.sqrt(2 * (order - 1) / 3)
    return Constellation(points=pts.astype(complex), name=f"{order}-QAM")


def power_levels(L: int, rho_start_db: float, gap_db: float) -> np.ndarray:
    """Symmetric dB ladder ``rho_start - gap + 2 (l-1) gap / (L-1)``, ``l = 1..L``."""
    L = int(L)
    if L < 3 or L % 2 == 0:
        raise ValueError(f"number of levels must be odd and >= 3, got {L}")
    if not gap_db > 0:
        raise ValueError(f"power gap must be positive, got {gap_db}")
    ell = np.arange(L)
    return rho_start_db - gap_db + 2.0 * ell * gap_db / (L - 1)


@dataclass(frozen=True)
class CompositePairing:
    pairs: tuple
    composite_powers_db: np.ndarray
    gap_db: float

    def __len__(self) -> int:
        return len(self.pairs)


def composite_levels(rho1_db, gap_db: float):
    """Powers (dB) of the two-level pilot whose lower level is ``rho1_db``."""
    rho1_db = np.asarray(rho1_db, dtype=float)
    return rho1_db, rho1_db + gap_db


def composite_power_db(lo_db, hi_db):
    """Average power of a two-level pilot, averaged in linear scale."""
    return lin2db((db2lin(lo_db) + db2lin(hi_db)) / 2.0)


def lower_level_for_composite(comp_db, gap_db: float):
    """Inverse of :func:`composite_power_db` for a fixed gap: the lower level in dB."""
    comp = db2lin(comp_db)
    return lin2db(2.0 * comp / (1.0 + db2lin(gap_db)))


def composite_pairs(levels_db: Sequence[float]) -> CompositePairing:
    """Pair level ``i`` with level ``i + (L-1)/2`` of a uniform dB ladder.

    Returns the ``(L+1)/2`` index pairs (0-based) and their composite powers.
    """
    levels = np.asarray(levels_db, dtype=float)
    L = levels.size
    if L < 3 or L % 2 == 0:
        raise ValueError(f"ladder must have an odd number >= 3 of levels, got {L}")
    steps = np.diff(levels)
    if not np.allclose(steps, steps[0], rtol=0, atol=1e-9) or steps[0] <= 0:
        raise ValueError("levels must form an ascending uniform dB ladder")
    half = (L - 1) // 2
    pairs = tuple((i, i + half) for i in range(half + 1))
    lo = levels[[i for i, _ in pairs]]
    hi = levels[[j for _, j in pairs]]
    return CompositePairing(
        pairs=pairs,
        composite_powers_db=composite_power_db(lo, hi),
        gap_db=float(levels[-1] - levels[0]) / 2.0,
    )


def build_multiamp_pilot(base: np.ndarray, levels_db: Sequence[float]) -> np.ndarray:
    """Concatenate ``sqrt(rho_l) * base`` blocks, one per level (dB)."""
    base = np.asarray(base, dtype=complex)
    amps = np.sqrt(db2lin(np.atleast_1d(levels_db)))
    return (amps[:, None] * base[None, :]).reshape(-1)


@dataclass(frozen=True)
class PilotSpec:
    """Multi-amplitude pilot: a unit-modulus base sequence on an L-level ladder."""

    base: np.ndarray
    levels_db: np.ndarray
    rho_start_db: float
    gap_db: float

    @classmethod
    def ladder(cls, tau: int, L: int, rho_start_db: float, gap_db: float, root: int = 1) -> "PilotSpec":
        return cls(
            base=zadoff_chu(tau, root),
            levels_db=power_levels(L, rho_start_db, gap_db),
            rho_start_db=float(rho_start_db),
            gap_db=float(gap_db),
        )

    @property
    def tau(self) -> int:
        return self.base.size

    @property
    def L(self) -> int:
        return self.levels_db.size

    @property
    def q(self) -> np.ndarray:
        return build_multiamp_pilot(self.base, self.levels_db)

    def pairing(self) -> CompositePairing:
        return composite_pairs(self.levels_db)

    def shifted(self, offset_db: float) -> "PilotSpec":
        """Same ladder as received with a common power offset."""
        return PilotSpec(self.base, self.levels_db + offset_db, self.rho_start_db + offset_db, self.gap_db)


def draw_data_symbols(constellation: Constellation, N: int, rng: RngLike):
    """Uniform i.i.d. symbol indices and their constellation points."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    idx = as_generator(rng).integers(0, constellation.order, size=N)
    return idx, constellation.points[idx]
