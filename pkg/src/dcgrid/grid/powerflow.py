"""Backward/forward sweep power flow for radial unbalanced feeders.

The sweep is linear in the node current injections for fixed taps, so the
solver composes one backward (branch-current accumulation) and one forward
(voltage-drop propagation) pass over an identity injection to get the
drop matrix once per tap setting, then iterates
``V = V0 - D @ I(V)`` with constant-power and constant-impedance currents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from dcgrid.grid.feeder import PHASES, FeederModel

_PHASOR = {ph: np.exp(-2j * math.pi * k / 3) for k, ph in enumerate(PHASES)}


class PowerFlowDivergence(RuntimeError):
    """The sweep failed to converge; usually an electrically infeasible loading."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class BusVoltages:
    index: tuple[tuple[str, str], ...]
    phasors: np.ndarray
    base_v: np.ndarray
    iterations: int = 0

    @property
    def pu(self) -> np.ndarray:
        return np.abs(self.phasors) / self.base_v

    def magnitude(self, bus: str, phase: str) -> float:
        i = self.index.index((bus, phase))
        return float(abs(self.phasors[i]) / self.base_v[i])

    def by_bus(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for (bus, ph), v in zip(self.index, self.pu):
            out.setdefault(bus, {})[ph] = float(v)
        return out


class SweepSolver:
    """Reusable solver bound to one feeder; caches the drop matrix per tap setting."""

    def __init__(self, feeder: FeederModel, tol: float = 1e-8, max_iter: int = 100):
        self.feeder = feeder
        self.tol = tol
        self.max_iter = max_iter
        self.index = tuple(feeder.node_index())
        self.node = {key: i for i, key in enumerate(self.index)}
        self.n = len(self.index)
        self.base_v = np.array([feeder.bus_by_id[b].kv_ln * 1e3 for b, _ in self.index])

        order, parent_line = feeder.tree_order()
        self._branches = []  # (line id, child node idx, parent node idx, phase idx, z)
        for w in order[1:]:
            ln = parent_line[w]
            phases = feeder.bus_by_id[w].phases
            ph_idx = [PHASES.index(p) for p in phases]
            child = np.array([self.node[(w, p)] for p in phases])
            parent = np.array([self.node[(ln.from_bus, p)] for p in phases])
            z = np.asarray(ln.z_ohm, dtype=complex)[np.ix_(ph_idx, ph_idx)]
            self._branches.append((ln.id, child, parent, phases, z))

        self._source_nodes = np.array([self.node[(feeder.source_bus, p)]
                                       for p in feeder.bus_by_id[feeder.source_bus].phases])
        self._source_v = np.array([
            feeder.source_pu * self.base_v[i] * _PHASOR[self.index[i][1]] for i in self._source_nodes
        ])
        self.y_shunt = np.zeros(self.n, dtype=complex)
        for cap in feeder.capacitors:
            i = self.node[(cap.bus, cap.phase)]
            self.y_shunt[i] += 1j * cap.kvar * 1e3 / self.base_v[i] ** 2
        self._cache: dict[tuple, tuple[np.ndarray, np.ndarray, list]] = {}

    def _ratios(self, taps: Mapping[str, float]) -> list[np.ndarray]:
        by_line: dict[str, list] = {}
        for reg in self.feeder.regulators:
            by_line.setdefault(reg.line, []).append((reg.phases, float(taps.get(reg.id, reg.tap))))
        ratios = []
        for line_id, _, _, phases, _ in self._branches:
            a = np.ones(len(phases))
            for reg_phases, tap in by_line.get(line_id, ()):
                for k, p in enumerate(phases):
                    if p in reg_phases:
                        a[k] *= tap
            ratios.append(a)
        return ratios

    def backward(self, injections: np.ndarray, ratios: list[np.ndarray]) -> list[np.ndarray]:
        """Branch currents (receiving side) from node current injections, leaves first."""
        acc = np.array(injections, dtype=complex, copy=True)
        currents: list[Optional[np.ndarray]] = [None] * len(self._branches)
        for k in range(len(self._branches) - 1, -1, -1):
            _, child, parent, _, _ = self._branches[k]
            j = acc[child]
            currents[k] = j
            a = ratios[k].reshape((-1,) + (1,) * (acc.ndim - 1))
            acc[parent] += a * j
        return currents

    def forward(self, currents: list[np.ndarray], ratios: list[np.ndarray], start: np.ndarray) -> np.ndarray:
        """Propagate node values from the source: ``out[child] = a * out[parent] - Z @ J``."""
        out = np.array(start, dtype=complex, copy=True)
        for k, (_, child, parent, _, z) in enumerate(self._branches):
            a = ratios[k].reshape((-1,) + (1,) * (out.ndim - 1))
            out[child] = a * out[parent] - z @ currents[k]
        return out

    def operators(self, taps: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray, list]:
        """No-load voltages ``V0`` and drop matrix ``D`` with ``V = V0 - D @ I``."""
        key = tuple(sorted((k, float(v)) for k, v in taps.items()))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ratios = self._ratios(taps)
        zero_currents = [np.zeros(len(b[1]), dtype=complex) for b in self._branches]
        v0_start = np.zeros(self.n, dtype=complex)
        v0_start[self._source_nodes] = self._source_v
        v0 = self.forward(zero_currents, ratios, v0_start)
        eye = np.eye(self.n, dtype=complex)
        drop = -self.forward(self.backward(eye, ratios), ratios, np.zeros((self.n, self.n), dtype=complex))
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = (v0, drop, ratios)
        return self._cache[key]

    def node_currents(self, v: np.ndarray, loads_va: np.ndarray) -> np.ndarray:
        return np.conj(loads_va / v) + self.y_shunt * v

    def solve(self, loads_va: np.ndarray, taps: Optional[Mapping[str, float]] = None,
              v_init: Optional[np.ndarray] = None) -> BusVoltages:
        """Solve for node voltage phasors.

        ``loads_va`` is complex power consumed at each node (W + j var), in
        :attr:`index` order; negative real part is generation.
        """
        taps = self.feeder.initial_taps() if taps is None else taps
        v0, drop, _ = self.operators(taps)
        v = v0.copy() if v_init is None else np.array(v_init, dtype=complex, copy=True)
        loads_va = np.asarray(loads_va, dtype=complex)
        err = math.inf
        for it in range(1, self.max_iter + 1):
            v_new = v0 - drop @ (np.conj(loads_va / v) + self.y_shunt * v)
            err = float(np.max(np.abs(v_new - v) / self.base_v))
            v = v_new
            if not math.isfinite(err) or float(np.min(np.abs(v) / self.base_v)) < 0.05:
                raise PowerFlowDivergence(f"voltage collapse at iteration {it}", err, it)
            if err < self.tol:
                return BusVoltages(self.index, v, self.base_v, it)
        raise PowerFlowDivergence(f"no convergence after {self.max_iter} iterations (residual {err:.3e} pu)",
                                  err, self.max_iter)

    def branch_currents(self, voltages: BusVoltages, loads_va: np.ndarray,
                        taps: Optional[Mapping[str, float]] = None) -> dict[str, np.ndarray]:
        taps = self.feeder.initial_taps() if taps is None else taps
        _, _, ratios = self.operators(taps)
        currents = self.backward(self.node_currents(voltages.phasors, np.asarray(loads_va)), ratios)
        return {b[0]: j for b, j in zip(self._branches, currents)}

    def loads_vector(self, loads: Mapping[tuple[str, str], complex]) -> np.ndarray:
        s = np.zeros(self.n, dtype=complex)
        for key, val in loads.items():
            try:
                s[self.node[key]] += val
            except KeyError:
                raise KeyError(f"no bus-phase {key} in feeder {self.feeder.name!r}") from None
        return s


def solve_power_flow(feeder: FeederModel, loads: Mapping[tuple[str, str], complex],
                     taps: Optional[Mapping[str, float]] = None, tol: float = 1e-8,
                     max_iter: int = 100) -> BusVoltages:
    """One-shot solve; ``loads`` maps ``(bus, phase)`` to consumed complex power in VA."""
    solver = SweepSolver(feeder, tol=tol, max_iter=max_iter)
    return solver.solve(solver.loads_vector(loads), taps)
