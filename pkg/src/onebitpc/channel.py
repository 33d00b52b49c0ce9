"""Uplink propagation: i.i.d. Rayleigh block fading, AWGN and the mobile
link budget (pathloss, log-normal shadowing, straight-line mobility)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngLike, as_generator, cgauss

__all__ = [
    "LinkScenario",
    "LinkState",
    "rayleigh_channel",
    "apply_uplink",
    "pathloss_db",
    "shadowing_trace",
    "mobility_trace",
    "distance_at",
    "effective_rho_db",
    "link_states",
]


def rayleigh_channel(M: int, rng: RngLike, batch: tuple = ()) -> np.ndarray:
    """Channel vector(s) ``h ~ CN(0, I_M)``, shape ``batch + (M,)``."""
    if M < 1:
        raise ValueError(f"antenna count must be >= 1, got {M}")
    return cgauss(tuple(batch) + (int(M),), rng)


def apply_uplink(h: np.ndarray, s: np.ndarray, rho_db: float, rng: RngLike | None, noise: bool = True) -> np.ndarray:
    """Received grid ``sqrt(rho) h s^H + Z`` before the ADCs.

    ``h`` has shape ``(..., M)`` and ``s`` shape ``(..., T)``; leading axes
    broadcast. Column ``t`` carries ``conj(s[t])``. ``rho_db = -inf`` gives
    pure noise. ``noise=False`` drops ``Z`` (``rng`` may then be None).
    """
    h = np.asarray(h, dtype=complex)
    s = np.asarray(s, dtype=complex)
    if np.isnan(rho_db) or rho_db == np.inf:
        raise ValueError("rho_db must be finite or -inf")
    amp = 0.0 if rho_db == -np.inf else np.sqrt(10.0 ** (rho_db / 10.0))
    y = amp * h[..., :, None] * np.conj(s)[..., None, :]
    if noise:
        y = y + cgauss(y.shape, rng)
    return y


def pathloss_db(d) -> np.ndarray | float:
    """Channel gain ``-61 - 30 log10(d)`` dB at distance ``d`` metres."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = -61.0 - 30.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LinkScenario:
    """Mobile uplink scenario; all powers in dB, distances in metres.

    ``noise_floor_db`` maps ``tx_power_db + gain_db`` onto the normalized
    receive power of the unit-noise signal model.
    """

    pathloss_offset_db: float = -61.0
    pathloss_slope_db: float = 30.0
    shadow_sigma_db: float = 4.0
    shadow_corr_distance_m: float = 10.0
    noise_floor_db: float = 0.0
    d0_m: float = 63.73
    velocity_mps: float = 20.0
    duration_s: float = 2.5
    step_s: float = 0.01

    def __post_init__(self):
        if self.step_s <= 0:
            raise ValueError("step_s must be positive")
        if self.duration_s < 0 or self.d0_m <= 0:
            raise ValueError("duration must be >= 0 and d0 > 0")
        if self.shadow_sigma_db < 0 or self.shadow_corr_distance_m <= 0:
            raise ValueError("shadow sigma must be >= 0 and correlation distance > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.step_s))

    def gain_db(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise ValueError("distance must be positive")
        return self.pathloss_offset_db - self.pathloss_slope_db * np.log10(d)


@dataclass(frozen=True)
class LinkState:
    t: float
    d: float
    shadow_db: float
    effective_rho_db: float


def distance_at(scenario: LinkScenario, t) -> np.ndarray | float:
    d = scenario.d0_m - scenario.velocity_mps * np.asarray(t, dtype=float)
    return float(d) if d.ndim == 0 else d


def mobility_trace(scenario: LinkScenario) -> np.ndarray:
    """``(n_steps, 2)`` array of ``(t, d)`` sampled every ``step_s`` from t=0.

    Rejects scenarios whose path reaches the base station within the
    simulated duration.
    """
    if distance_at(scenario, scenario.duration_s) <= 0:
        raise ValueError(
            f"trajectory reaches d <= 0: d0={scenario.d0_m} m, v={scenario.velocity_mps} m/s, "
            f"duration={scenario.duration_s} s"
        )
    t = np.arange(scenario.n_steps) * scenario.step_s
    return np.column_stack([t, distance_at(scenario, t)])


def shadowing_trace(scenario: LinkScenario, rng: RngLike) -> np.ndarray:
    """Gauss-Markov shadowing (dB) along the path, one value per time step.

    Stationary N(0, sigma^2) marginal with autocorrelation
    ``exp(-|dd| / corr_distance)`` in travelled distance.
    """
    n = scenario.n_steps
    sigma = scenario.shadow_sigma_db
    w = as_generator(rng).standard_normal(n)
    if sigma == 0:
        return np.zeros(n)
    a = np.exp(-abs(scenario.velocity_mps) * scenario.step_s / scenario.shadow_corr_distance_m)
    b = np.sqrt(1.0 - a * a)
    out = np.empty(n)
    out[0] = sigma * w[0]
    for k in range(1, n):
        out[k] = a * out[k - 1] + b * sigma * w[k]
    return out


def effective_rho_db(tx_power_db, d, shadow_db, scenario: LinkScenario):
    """Normalized receive power: ``tx + gain(d) + shadow - noise_floor`` (dB)."""
    return np.asarray(tx_power_db) + scenario.gain_db(d) + np.asarray(shadow_db) - scenario.noise_floor_db


def link_states(scenario: LinkScenario, tx_power_db: float, rng: RngLike) -> list[LinkState]:
    """Link states along the trajectory for a constant transmit power."""
    td = mobility_trace(scenario)
    sh = shadowing_trace(scenario, rng)
    rho = effective_rho_db(tx_power_db, td[:, 1], sh, scenario)
    return [LinkState(float(t), float(d), float(s), float(r)) for (t, d), s, r in zip(td, sh, rho)]
