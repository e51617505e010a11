"""Rule-based inner/outer loop link adaptation (ILLA + OLLA)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import mcs
from .linksim import DEFAULT_SLOPE_PER_DB

OFFSET_CLAMP_DB = 10.0


@dataclass(frozen=True)
class OllaState:
    offset_db: float = 0.0
    step_up_db: float = 0.5
    target_bler: float = 0.1

    def __post_init__(self):
        if self.step_up_db <= 0:
            raise ValueError("step_up_db must be positive")
        if not 0.0 < self.target_bler < 1.0:
            raise ValueError("target_bler must lie in (0, 1)")

    @property
    def step_down_db(self) -> float:
        # zero mean drift when NACKs occur at exactly the target rate
        return self.step_up_db * self.target_bler / (1.0 - self.target_bler)


def illa_select(
    sinr_est_db: float,
    offset_db: float = 0.0,
    gap_db: float = mcs.DEFAULT_GAP_DB,
    target_bler: float = 0.1,
    slope_per_db: float = DEFAULT_SLOPE_PER_DB,
) -> int:
    """Largest MCS meeting ``target_bler`` at the offset-corrected SINR estimate; 0 if none."""
    # bler(m, s) <= target  <=>  s >= theta_m + ln((1 - target) / target) / slope
    margin = np.log((1.0 - target_bler) / target_bler) / slope_per_db
    ok = mcs.required_sinr_table(gap_db) + margin <= sinr_est_db - offset_db
    idx = np.flatnonzero(ok)
    return int(idx[-1]) if idx.size else 0


def olla_update(state: OllaState, ack: bool) -> OllaState:
    """Move the offset down on ACK, up on NACK, clamped to +-10 dB."""
    delta = -state.step_down_db if ack else state.step_up_db
    offset = min(max(state.offset_db + delta, -OFFSET_CLAMP_DB), OFFSET_CLAMP_DB)
    return dataclasses.replace(state, offset_db=offset)


class OllaPolicy:
    """ILLA + OLLA as an evaluation policy.

    Reads the CQI-derived SINR estimate from the state vector and updates
    its offset from first-transmission HARQ feedback only.
    """

    name = "olla"

    def __init__(
        self,
        step_up_db: float = 0.5,
        target_bler: float = 0.1,
        gap_db: float = mcs.DEFAULT_GAP_DB,
        slope_per_db: float = DEFAULT_SLOPE_PER_DB,
    ):
        self.initial = OllaState(0.0, step_up_db, target_bler)
        self.gap_db = gap_db
        self.slope_per_db = slope_per_db
        self.state = self.initial

    def reset(self) -> None:
        self.state = self.initial

    def __call__(self, s) -> int:
        sinr_est = float(s[2]) * 40.0
        return illa_select(
            sinr_est, self.state.offset_db, self.gap_db, self.state.target_bler, self.slope_per_db
        )

    def observe(self, action: int, success: bool, attempt: int) -> None:
        if attempt == 0:
            self.state = olla_update(self.state, success)
