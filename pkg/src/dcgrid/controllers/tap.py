from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcgrid.commands import SetTaps
from dcgrid.controllers.base import Controller
from dcgrid.grid.feeder import TAP_MAX, TAP_MIN, TAP_STEP


@dataclass(frozen=True)
class TapParams:
    regulator: str
    tap_step: float = TAP_STEP
    tap_min: float = TAP_MIN
    tap_max: float = TAP_MAX
    deadband: float = 0.002
    cooldown_s: float = 60.0
    v_lo: float = 0.95
    v_hi: float = 1.05


def adaptive_tap_step(voltages, current_tap: float, time_s: float, next_allowed_s: float,
                      params: TapParams) -> float | None:
    """New tap, or None when in cooldown, inside the deadband, or pinned at a limit."""
    if time_s < next_allowed_s:
        return None
    v = np.asarray(voltages)
    low_margin = params.v_lo - float(np.nanmin(v))
    high_margin = float(np.nanmax(v)) - params.v_hi
    if low_margin <= params.deadband and high_margin <= params.deadband:
        return None
    direction = 1 if low_margin > high_margin else -1
    target = min(params.tap_max, max(params.tap_min, current_tap + direction * params.tap_step))
    if abs(target - current_tap) < 1e-12:
        return None
    return target


class AdaptiveTapController(Controller):
    """Moves one regulator by a single tap step toward the worse margin, then waits out a cooldown."""

    name = "tap"

    def __init__(self, params: TapParams, dt=5):
        super().__init__(dt)
        self.params = params
        self.reset()

    def reset(self) -> None:
        self.next_allowed_s = 0.0

    def step(self, clock, datacenters, grid, events):
        current = grid.state.tap_positions.get(self.params.regulator, 1.0)
        target = adaptive_tap_step(grid.voltages_vector(), current, clock.time_s, self.next_allowed_s, self.params)
        if target is None:
            return []
        self.next_allowed_s = clock.time_s + self.params.cooldown_s
        return [SetTaps({self.params.regulator: target})]
