"""Grid component: profile-driven loads, datacenter attachment, taps and sensitivity probes."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from dcgrid.clock import SimulationClock, as_fraction
from dcgrid.commands import RoutingError, SetTaps
from dcgrid.grid.feeder import PHASES, FeederModel, snap_tap
from dcgrid.grid.powerflow import BusVoltages, SweepSolver

Profile = Callable[[float], float]


@dataclass
class GridState:
    time_s: float
    voltages: BusVoltages
    tap_positions: dict[str, float]

    def voltages_vector(self) -> np.ndarray:
        return self.voltages.pu


def voltages_vector(state: GridState) -> np.ndarray:
    """Per-unit magnitudes in bus-major, phase-minor order (absent phases omitted)."""
    return state.voltages.pu


@dataclass
class SensitivityMatrix:
    """``H[n, k]`` = d|V_n| (pu) / d(active power consumed on phase k at ``bus``) (per W)."""

    H: np.ndarray
    bus: str
    index: tuple[tuple[str, str], ...]
    delta_p_w: float


def estimate_sensitivity(solver: SweepSolver, dc_bus: str, delta_p_w: float, base_loads: np.ndarray,
                         taps: Optional[Mapping[str, float]] = None, central: bool = False,
                         base: Optional[BusVoltages] = None) -> SensitivityMatrix:
    """Finite-difference voltage sensitivity to per-phase load at ``dc_bus``.

    Forward differences by default (one extra solve per phase); ``central``
    uses two. Columns for phases absent at the bus are zero.
    """
    if delta_p_w <= 0:
        raise ValueError("probe magnitude must be positive")
    base_loads = np.asarray(base_loads, dtype=complex)
    if base is None:
        base = solver.solve(base_loads, taps)
    H = np.zeros((solver.n, 3))
    for k, ph in enumerate(PHASES):
        node = solver.node.get((dc_bus, ph))
        if node is None:
            continue
        up = base_loads.copy()
        up[node] += delta_p_w
        v_up = solver.solve(up, taps, v_init=base.phasors).pu
        if central:
            down = base_loads.copy()
            down[node] -= delta_p_w
            v_down = solver.solve(down, taps, v_init=base.phasors).pu
            H[:, k] = (v_up - v_down) / (2 * delta_p_w)
        else:
            H[:, k] = (v_up - base.pu) / delta_p_w
    return SensitivityMatrix(H, dc_bus, solver.index, delta_p_w)


class Grid:
    """Steps the feeder at its own cadence from averaged datacenter power samples.

    Spot loads scale with their load profile and PV generation with its PV
    profile; a profile id the scenario does not define evaluates to 1.0.
    Datacenter power is a unity-power-factor constant-power load at the
    attachment bus.
    """

    def __init__(self, feeder: FeederModel, load_profiles: Optional[Mapping[str, Profile]] = None,
                 pv_profiles: Optional[Mapping[str, Profile]] = None, dt=Fraction(1, 10),
                 tol: float = 1e-8, max_iter: int = 100):
        self.feeder = feeder
        self.dt = as_fraction(dt)
        self.solver = SweepSolver(feeder, tol=tol, max_iter=max_iter)
        self.load_profiles = dict(load_profiles or {})
        self.pv_profiles = dict(pv_profiles or {})
        n = self.solver.n
        node = self.solver.node

        groups: dict[tuple[str, Optional[str]], np.ndarray] = {}
        for ld in feeder.loads:
            arr = groups.setdefault(("load", ld.profile), np.zeros(n, dtype=complex))
            arr[node[(ld.bus, ld.phase)]] += (ld.kw + 1j * ld.kvar) * 1e3
        for pv in feeder.pv:
            arr = groups.setdefault(("pv", pv.profile), np.zeros(n, dtype=complex))
            arr[node[(pv.bus, pv.phase)]] -= pv.kw * 1e3
        self._groups = [(kind, pid, arr) for (kind, pid), arr in groups.items()]

        self._dc_nodes: dict[str, np.ndarray] = {}
        for dc_id, bus in feeder.datacenters.items():
            phases = feeder.bus_by_id[bus].phases
            if phases != PHASES:
                raise ValueError(f"datacenter {dc_id} needs a three-phase bus, {bus} has {phases!r}")
            self._dc_nodes[dc_id] = np.array([node[(bus, p)] for p in PHASES])
        self.reset()

    @property
    def dt_s(self) -> Fraction:
        return self.dt

    @property
    def v_index(self) -> tuple[tuple[str, str], ...]:
        return self.solver.index

    def reset(self) -> None:
        self.taps = self.feeder.initial_taps()
        self.state: Optional[GridState] = None
        self.last_loads: Optional[np.ndarray] = None
        self._last_dc_w = {dc: np.zeros(3) for dc in self._dc_nodes}
        self.dc_power_w = {dc: 0.0 for dc in self._dc_nodes}

    def background_loads(self, t: float) -> np.ndarray:
        s = np.zeros(self.solver.n, dtype=complex)
        for kind, pid, arr in self._groups:
            profiles = self.load_profiles if kind == "load" else self.pv_profiles
            scale = profiles[pid](t) if pid is not None and pid in profiles else 1.0
            s += scale * arr
        return s

    def assemble_loads(self, t: float, dc_power_w: Mapping[str, Sequence[float]]) -> np.ndarray:
        s = self.background_loads(t)
        for dc_id, p in dc_power_w.items():
            try:
                nodes = self._dc_nodes[dc_id]
            except KeyError:
                raise RoutingError(f"datacenter {dc_id!r} is not attached to feeder {self.feeder.name!r}") from None
            s[nodes] += np.asarray(p, dtype=float)
        return s

    def step(self, clock: SimulationClock, power_samples_w: Mapping[str, Sequence[Sequence[float]]]) -> GridState:
        """Average each datacenter's samples since the last step and solve."""
        for dc_id, samples in power_samples_w.items():
            if dc_id not in self._dc_nodes:
                raise RoutingError(f"datacenter {dc_id!r} is not attached to feeder {self.feeder.name!r}")
            if len(samples):
                self._last_dc_w[dc_id] = np.mean(np.asarray(samples, dtype=float), axis=0)
        loads = self.assemble_loads(clock.time_s, self._last_dc_w)
        v_init = self.state.voltages.phasors if self.state is not None else None
        voltages = self.solver.solve(loads, self.taps, v_init=v_init)
        self.last_loads = loads
        self.dc_power_w = {dc: float(p.sum()) for dc, p in self._last_dc_w.items()}
        self.state = GridState(clock.time_s, voltages, dict(self.taps))
        return self.state

    def apply_command(self, command) -> None:
        if not isinstance(command, SetTaps):
            raise RoutingError(f"grid cannot apply {type(command).__name__}")
        known = {r.id for r in self.feeder.regulators}
        for reg, value in command.taps.items():
            if reg not in known:
                raise RoutingError(f"unknown regulator {reg!r}")
            if not isinstance(value, (int, float)):
                value = float(np.mean(value))
            self.taps[reg] = snap_tap(value)

    def voltages_vector(self) -> np.ndarray:
        if self.state is None:
            raise RuntimeError("grid has not been stepped yet")
        return self.state.voltages.pu

    def datacenter_bus(self, dc_id: str) -> str:
        return self.feeder.datacenters[dc_id]

    def estimate_sensitivity(self, dc_id: str, delta_p_w: float, central: bool = False) -> SensitivityMatrix:
        if self.last_loads is None:
            raise RuntimeError("sensitivity probes need a solved operating point")
        return estimate_sensitivity(self.solver, self.datacenter_bus(dc_id), delta_p_w, self.last_loads,
                                    self.taps, central=central, base=self.state.voltages)
