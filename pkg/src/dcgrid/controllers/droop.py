"""Proportional droop on the worst bus-phase voltage violation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from dcgrid.commands import SetBatchSize
from dcgrid.controllers.base import Controller
from dcgrid.controllers.ladder import LogBatchState, snap_to_ladder


@dataclass(frozen=True)
class DroopParams:
    gain: float = 50.0
    deadband: float = 0.002
    v_lo: float = 0.95
    v_hi: float = 1.05

    def __post_init__(self) -> None:
        if self.gain < 0:
            raise ValueError("droop gain must be nonnegative")
        if not self.v_lo < self.v_hi:
            raise ValueError("voltage band needs v_lo < v_hi")


def droop_pressure(voltages: np.ndarray, params: DroopParams) -> float:
    """Signed pressure: positive under undervoltage, negative under overvoltage, zero in the deadband."""
    under = max(0.0, params.v_lo - float(np.min(voltages)))
    over = max(0.0, float(np.max(voltages)) - params.v_hi)
    p = under - over
    return 0.0 if abs(p) <= params.deadband else p


def droop_step(voltages, dc_state, specs: Mapping, params: DroopParams,
               states: Mapping[str, LogBatchState]) -> dict[str, int]:
    """Update every model's log-batch state and return batches that changed.

    An increase is suppressed while the model's observed ITL exceeds its
    deadline; the log state is then pinned back to the current batch.
    """
    p = droop_pressure(np.asarray(voltages), params)
    changed: dict[str, int] = {}
    if p == 0.0:
        return changed
    for label, st in states.items():
        spec = specs[label]
        current = dc_state.batch_size_by_model[label]
        st.move_to(st.x - params.gain * p)
        new = snap_to_ladder(st.x, spec.feasible_batch_sizes)
        if new > current and dc_state.itl_by_model[label] > spec.itl_deadline_s:
            st.x = st.project(math.log2(current))
            continue
        if new != current:
            changed[label] = new
    return changed


class DroopController(Controller):
    """One droop law per datacenter, all sharing the same parameters."""

    name = "droop"

    def __init__(self, params: DroopParams = DroopParams(), dt=1, datacenters=None):
        super().__init__(dt)
        self.params = params
        self.only = None if datacenters is None else set(datacenters)
        self.reset()

    def reset(self) -> None:
        self.states: dict[str, dict[str, LogBatchState]] = {}

    def step(self, clock, datacenters, grid, events):
        v = grid.voltages_vector()
        commands = []
        for dc_id, dc in datacenters.items():
            if self.only is not None and dc_id not in self.only:
                continue
            specs = {d.label: d.spec for d in dc.deployments}
            states = self.states.get(dc_id)
            if states is None:
                states = {lbl: LogBatchState.from_batch(dc.state.batch_size_by_model[lbl], s.feasible_batch_sizes)
                          for lbl, s in specs.items()}
                self.states[dc_id] = states
            changed = droop_step(v, dc.state, specs, self.params, states)
            if changed:
                commands.append(SetBatchSize(changed, target=dc_id))
        return commands
