"""Uplink power-control policies.

Single-shot offset estimation with multi-bit feedback, the differential
(DPC) 1-bit controller, and the conventional and fixed-power baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .reftables import ReferenceTable, TableRangeError, interp

__all__ = [
    "Policy",
    "FeedbackMessage",
    "ControllerState",
    "single_shot_offset",
    "single_shot_feedback",
    "dpc_step",
    "conventional_step",
    "apply_feedback",
    "quantize_power_db",
    "POWER_STEP_DB",
    "POWER_FIELD_BITS",
]

POWER_STEP_DB = 0.1
POWER_FIELD_BITS = 8


class Policy(str, Enum):
    SINGLE_SHOT = "single_shot"
    DPC = "dpc"
    CONVENTIONAL = "conventional"
    FIXED = "fixed"


@dataclass(frozen=True)
class FeedbackMessage:
    """``power_level``: absolute UE power in dB (0.1 dB resolution).
    ``step_direction``: +1 / -1."""

    kind: str
    payload: float

    def __post_init__(self):
        if self.kind == "step_direction":
            if self.payload not in (1, -1):
                raise ValueError(f"step direction must be +1 or -1, got {self.payload}")
        elif self.kind != "power_level":
            raise ValueError(f"unknown feedback kind {self.kind!r}")

    @classmethod
    def step(cls, direction: int) -> "FeedbackMessage":
        return cls("step_direction", int(direction))

    @classmethod
    def level(cls, power_db: float) -> "FeedbackMessage":
        return cls("power_level", float(power_db))


@dataclass(frozen=True)
class ControllerState:
    policy: Policy
    tx_power_db: float
    target_ser: float = 5e-5
    step_db: float = 0.5
    history: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))


def quantize_power_db(x: float) -> float:
    """Nearest 0.1 dB; exact halves round toward -inf."""
    # x * 10 is exact at decimal halves (0.15 * 10 == 1.5) where x / 0.1 is not
    return math.ceil(float(x) * 10.0 - 0.5) / 10.0


def single_shot_offset(
    pmse_est,
    composite_powers_db,
    table: ReferenceTable,
    search_span_db: float = 10.0,
    search_step_db: float = 0.1,
) -> float:
    """Offset minimizing ``|| PMSE_ref(comp + off) - PMSE_est(comp) ||^2``.

    Exhaustive search over ``[-span, span]`` in ``search_step_db`` steps;
    among equal costs the smallest ``|offset|`` wins (then the negative one).
    """
    est = np.asarray(pmse_est, dtype=float)
    comp = np.asarray(composite_powers_db, dtype=float)
    if est.shape != comp.shape or est.size < 2:
        raise ValueError("need matching PMSE estimates and composite powers, at least two of each")
    n = int(round(search_span_db / search_step_db))
    cand = np.round(np.arange(-n, n + 1) * search_step_db, 9)
    cand = cand[np.lexsort((cand, np.abs(cand)))]
    query = comp[None, :] + cand[:, None]
    lo, hi = table.grid_db[0], table.grid_db[-1]
    bad = np.any((query < lo - 1e-9) | (query > hi + 1e-9), axis=1)
    if np.any(bad):
        raise TableRangeError(
            f"candidate offset {cand[bad][np.argmax(np.abs(cand[bad]))]:+.2f} dB queries outside "
            f"the table range [{lo}, {hi}] dB"
        )
    ref = interp(table, query)
    cost = np.sum((ref - est[None, :]) ** 2, axis=1)
    return float(cand[int(np.argmin(cost))])


def single_shot_feedback(offset_db: float, target_rho_db: float, current_power_db: float,
                         nominal_rho_db: float | None = None) -> FeedbackMessage:
    """Power level that moves the received power from ``nominal + offset`` to the target.

    ``nominal_rho_db`` is the receive power the UE aimed for with its current
    power (defaults to the target itself, i.e. open-loop compensation). The
    correction is clipped to the 8-bit field of 0.1 dB steps.
    """
    nominal = target_rho_db if nominal_rho_db is None else nominal_rho_db
    correction = target_rho_db - (nominal + offset_db)
    half = 2 ** (POWER_FIELD_BITS - 1)
    correction = min(max(correction, -half * POWER_STEP_DB), (half - 1) * POWER_STEP_DB)
    return FeedbackMessage.level(quantize_power_db(current_power_db + correction))


def dpc_step(delta: float, mapped_ser: float, target_ser: float) -> FeedbackMessage:
    """Differential rule: back off whenever quantization-limited (``delta > 0``),
    otherwise step up until the mapped SER meets the target."""
    if delta > 0:
        return FeedbackMessage.step(-1)
    return FeedbackMessage.step(+1 if mapped_ser > target_ser else -1)


def conventional_step(observed_ser: float, target_ser: float) -> FeedbackMessage:
    """Up if the target is missed, down otherwise."""
    if not 0.0 <= observed_ser <= 1.0:
        raise ValueError(f"observed SER must lie in [0, 1], got {observed_ser}")
    return FeedbackMessage.step(+1 if observed_ser > target_ser else -1)


_EXPECTS = {
    Policy.SINGLE_SHOT: "power_level",
    Policy.DPC: "step_direction",
    Policy.CONVENTIONAL: "step_direction",
}


def apply_feedback(state: ControllerState, msg: FeedbackMessage | None, t: float = float("nan")) -> ControllerState:
    """UE-side update; returns a new state with the message logged."""
    if state.policy is Policy.FIXED or msg is None:
        return replace(state, history=state.history + ((t, state.tx_power_db, msg),))
    want = _EXPECTS[state.policy]
    if msg.kind != want:
        raise ValueError(f"{state.policy.value} controller expects {want} feedback, got {msg.kind}")
    if msg.kind == "step_direction":
        power = state.tx_power_db + msg.payload * state.step_db
    else:
        power = msg.payload
    return replace(state, tx_power_db=power, history=state.history + ((t, power, msg),))
