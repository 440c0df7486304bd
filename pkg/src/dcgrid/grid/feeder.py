"""Radial three-phase feeder description and its ``feeder.json`` format."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PHASES = "abc"
TAP_STEP = 0.00625
TAP_MIN = 0.90
TAP_MAX = 1.10


class FeederError(ValueError):
    pass


def snap_tap(value: float) -> float:
    """Clamp to [0.90, 1.10] and round to the nearest whole tap step."""
    clamped = min(TAP_MAX, max(TAP_MIN, float(value)))
    steps = round((clamped - 1.0) / TAP_STEP)
    return 1.0 + steps * TAP_STEP


def is_tap_position(value: float) -> bool:
    steps = (value - 1.0) / TAP_STEP
    return TAP_MIN - 1e-12 <= value <= TAP_MAX + 1e-12 and abs(steps - round(steps)) < 1e-9


@dataclass(frozen=True)
class Bus:
    id: str
    phases: str = "abc"
    kv_ln: float = 2.4018


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    z_ohm: np.ndarray  # 3x3 complex, rows/cols ordered a, b, c


@dataclass(frozen=True)
class SpotLoad:
    bus: str
    phase: str
    kw: float
    kvar: float = 0.0
    profile: Optional[str] = None


@dataclass(frozen=True)
class PVGenerator:
    id: str
    bus: str
    phase: str
    kw: float
    profile: Optional[str] = None


@dataclass(frozen=True)
class Capacitor:
    bus: str
    phase: str
    kvar: float


@dataclass(frozen=True)
class Regulator:
    """Ideal ratio transformer at the sending end of ``line``, ganged over ``phases``."""

    id: str
    line: str
    phases: str = "abc"
    tap: float = 1.0


@dataclass
class FeederModel:
    name: str
    buses: list[Bus]
    lines: list[Line]
    source_bus: str
    source_pu: float = 1.0
    loads: list[SpotLoad] = field(default_factory=list)
    pv: list[PVGenerator] = field(default_factory=list)
    capacitors: list[Capacitor] = field(default_factory=list)
    regulators: list[Regulator] = field(default_factory=list)
    datacenters: dict[str, str] = field(default_factory=dict)
    zones: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.bus_by_id = {b.id: b for b in self.buses}
        if len(self.bus_by_id) != len(self.buses):
            raise FeederError("duplicate bus ids")
        self.line_by_id = {ln.id: ln for ln in self.lines}
        if len(self.line_by_id) != len(self.lines):
            raise FeederError("duplicate line ids")
        self.validate()

    def has(self, bus: str, phase: str) -> bool:
        return bus in self.bus_by_id and phase in self.bus_by_id[bus].phases

    def node_index(self) -> list[tuple[str, str]]:
        """Bus-major, phase-minor ordering of every present bus-phase."""
        return [(b.id, ph) for b in self.buses for ph in PHASES if ph in b.phases]

    def tree_order(self) -> tuple[list[str], dict[str, Line]]:
        """Buses in BFS order from the source, and each non-source bus's feeding line."""
        adjacent: dict[str, list[tuple[str, Line]]] = {b: [] for b in self.bus_by_id}
        for ln in self.lines:
            adjacent[ln.from_bus].append((ln.to_bus, ln))
            adjacent[ln.to_bus].append((ln.from_bus, ln))
        order, parent_line = [self.source_bus], {}
        seen = {self.source_bus}
        queue = deque([self.source_bus])
        while queue:
            u = queue.popleft()
            for w, ln in adjacent[u]:
                if w in seen:
                    continue
                if ln.from_bus != u:
                    raise FeederError(f"line {ln.id} is oriented against the flow from the source")
                seen.add(w)
                parent_line[w] = ln
                order.append(w)
                queue.append(w)
        return order, parent_line

    def validate(self) -> None:
        if self.source_bus not in self.bus_by_id:
            raise FeederError(f"source bus {self.source_bus!r} not defined")
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in self.bus_by_id:
                    raise FeederError(f"line {ln.id} references unknown bus {end!r}")
            if np.shape(ln.z_ohm) != (3, 3):
                raise FeederError(f"line {ln.id}: impedance must be 3x3")
            up, down = self.bus_by_id[ln.from_bus], self.bus_by_id[ln.to_bus]
            if not set(down.phases) <= set(up.phases):
                raise FeederError(f"line {ln.id}: bus {down.id} phases {down.phases} not fed by {up.phases}")
            if not np.isclose(up.kv_ln, down.kv_ln):
                raise FeederError(f"line {ln.id}: voltage level changes without a transformer")
        if len(self.lines) != len(self.buses) - 1:
            raise FeederError("feeder is not a tree: need exactly one line per non-source bus")
        order, _ = self.tree_order()
        if len(order) != len(self.buses):
            missing = sorted(set(self.bus_by_id) - set(order))
            raise FeederError(f"buses not connected to the source: {missing}")
        for item in [*self.loads, *self.pv, *self.capacitors]:
            if not self.has(item.bus, item.phase):
                raise FeederError(f"{type(item).__name__} at missing bus-phase {item.bus}.{item.phase}")
        for reg in self.regulators:
            if reg.line not in self.line_by_id:
                raise FeederError(f"regulator {reg.id} on unknown line {reg.line!r}")
            if not is_tap_position(reg.tap):
                raise FeederError(f"regulator {reg.id}: tap {reg.tap} is not a valid tap position")
        for dc, bus in self.datacenters.items():
            if bus not in self.bus_by_id:
                raise FeederError(f"datacenter {dc} attached to unknown bus {bus!r}")
        for zone, buses in self.zones.items():
            for bus in buses:
                if bus not in self.bus_by_id:
                    raise FeederError(f"zone {zone} lists unknown bus {bus!r}")

    def initial_taps(self) -> dict[str, float]:
        return {r.id: r.tap for r in self.regulators}

    def to_dict(self) -> dict:
        def z(mat):
            mat = np.asarray(mat)
            return {"r": mat.real.tolist(), "x": mat.imag.tolist()}

        return {
            "name": self.name,
            "source": {"bus": self.source_bus, "pu": self.source_pu},
            "buses": [{"id": b.id, "phases": b.phases, "kv_ln": b.kv_ln} for b in self.buses],
            "lines": [{"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "z_ohm": z(ln.z_ohm)} for ln in self.lines],
            "loads": [vars(ld) for ld in self.loads],
            "pv": [vars(p) for p in self.pv],
            "capacitors": [vars(c) for c in self.capacitors],
            "regulators": [vars(r) for r in self.regulators],
            "datacenters": dict(self.datacenters),
            "zones": {k: list(v) for k, v in self.zones.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeederModel":
        try:
            lines = []
            for ln in d["lines"]:
                zr = np.asarray(ln["z_ohm"]["r"], dtype=float)
                zx = np.asarray(ln["z_ohm"]["x"], dtype=float)
                lines.append(Line(ln["id"], ln["from"], ln["to"], zr + 1j * zx))
            return cls(
                name=d.get("name", "feeder"),
                buses=[Bus(b["id"], b.get("phases", "abc"), float(b.get("kv_ln", 2.4018))) for b in d["buses"]],
                lines=lines,
                source_bus=d["source"]["bus"],
                source_pu=float(d["source"].get("pu", 1.0)),
                loads=[SpotLoad(**ld) for ld in d.get("loads", [])],
                pv=[PVGenerator(**p) for p in d.get("pv", [])],
                capacitors=[Capacitor(**c) for c in d.get("capacitors", [])],
                regulators=[Regulator(**r) for r in d.get("regulators", [])],
                datacenters=dict(d.get("datacenters", {})),
                zones={k: list(v) for k, v in d.get("zones", {}).items()},
            )
        except (KeyError, TypeError) as exc:
            raise FeederError(f"malformed feeder description: {exc}") from None


def load_feeder(path) -> FeederModel:
    with open(path) as fh:
        return FeederModel.from_dict(json.load(fh))


def save_feeder(feeder: FeederModel, path) -> None:
    Path(path).write_text(json.dumps(feeder.to_dict(), indent=1) + "\n")
