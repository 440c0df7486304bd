"""Deterministic multi-rate co-simulation loop."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

import numpy as np

from dcgrid.clock import ComponentSchedule, SimulationClock, as_fraction
from dcgrid.commands import DATACENTER_COMMANDS, GRID_COMMANDS, RoutingError, payload
from dcgrid.controllers.base import Controller
from dcgrid.datacenter.backend import Datacenter
from dcgrid.datacenter.spec import ModelDeployment
from dcgrid.datacenter.traces import TraceStore
from dcgrid.events import EventLog
from dcgrid.grid.backend import Grid
from dcgrid.grid.feeder import FeederModel
from dcgrid.metrics import (
    V_HI,
    V_LO,
    MetricsSummary,
    batch_switch_count,
    integral_voltage_violation,
    latency_violation_rate,
    mean_token_throughput,
    voltage_violation_split,
)
from dcgrid.rng import SeedBank

if TYPE_CHECKING:
    from dcgrid.scenario.model import Scenario


@dataclass(frozen=True)
class DatacenterConfig:
    dc_id: str
    deployments: tuple[ModelDeployment, ...]
    base_load_w: float = 0.0


@dataclass
class EpisodeLog:
    seed: int
    duration_s: float
    grid_dt_s: float
    dc_dt_s: float
    times: np.ndarray
    v_index: tuple[tuple[str, str], ...]
    voltages: np.ndarray  # samples x bus-phases, pu
    total_power_w: np.ndarray  # power delivered to the grid, per grid step
    dc_times: np.ndarray
    dc_power_w: dict[str, np.ndarray]  # per datacenter, samples x 3 phases
    batch_size: dict[str, np.ndarray]
    itl_s: dict[str, np.ndarray]
    throughput_tps: dict[str, np.ndarray]
    taps: dict[str, np.ndarray]
    deadlines_s: dict[str, float]
    events: EventLog
    step_counts: dict[str, int] = field(default_factory=dict)

    @property
    def vmin(self) -> np.ndarray:
        return self.voltages.min(axis=1)

    @property
    def vmax(self) -> np.ndarray:
        return self.voltages.max(axis=1)

    def metrics(self, v_lo: float = V_LO, v_hi: float = V_HI) -> MetricsSummary:
        labels = list(self.batch_size)
        return MetricsSummary(
            integral_voltage_violation=integral_voltage_violation(self.voltages, self.grid_dt_s, v_lo, v_hi),
            mean_token_throughput=mean_token_throughput(
                np.column_stack([self.throughput_tps[k] for k in labels]), self.grid_dt_s),
            latency_violation_rate=latency_violation_rate(
                np.column_stack([self.itl_s[k] for k in labels]), [self.deadlines_s[k] for k in labels]),
            batch_switch_count=batch_switch_count(np.column_stack([self.batch_size[k] for k in labels])),
        )

    def violation_split(self, v_lo: float = V_LO, v_hi: float = V_HI) -> tuple[float, float]:
        return voltage_violation_split(self.voltages, self.grid_dt_s, v_lo, v_hi)


def _model_keys(datacenters: Sequence[DatacenterConfig]) -> list[tuple[str, str, str]]:
    """(dc id, label, log key); keys are bare labels unless a label repeats across sites."""
    pairs = [(dc.dc_id, d.label) for dc in datacenters for d in dc.deployments]
    labels = [lbl for _, lbl in pairs]
    unique = len(set(labels)) == len(labels)
    return [(dc, lbl, lbl if unique else f"{dc}/{lbl}") for dc, lbl in pairs]


def route_command(command, datacenters: Mapping[str, Datacenter], grid: Grid, events: EventLog,
                  time_s: float, source: str = "controller") -> None:
    """Deliver a command to its target component and log it."""
    if isinstance(command, DATACENTER_COMMANDS):
        if command.target not in datacenters:
            raise RoutingError(f"{type(command).__name__} targets {command.target!r}, which is not a datacenter")
        datacenters[command.target].apply_command(command)
    elif isinstance(command, GRID_COMMANDS):
        if command.target != "grid":
            raise RoutingError(f"{type(command).__name__} must target the grid, not {command.target!r}")
        grid.apply_command(command)
    else:
        raise RoutingError(f"unroutable command {command!r}")
    events.emit(time_s, source, "command", command=command.kind, target=command.target, **payload(command))


def build_components(feeder: FeederModel, datacenters: Sequence[DatacenterConfig], scenario: Scenario,
                     seeds: SeedBank, dc_dt, grid_dt, stochastic_itl: bool = False,
                     trace_store: Optional[TraceStore] = None, tol: float = 1e-8,
                     max_iter: int = 100) -> tuple[dict[str, Datacenter], Grid]:
    overlay_dc = scenario.overlay_datacenter or (datacenters[0].dc_id if datacenters else None)
    dcs = {}
    for cfg in datacenters:
        dcs[cfg.dc_id] = Datacenter(
            dc_id=cfg.dc_id,
            deployments=list(cfg.deployments),
            base_load_w=cfg.base_load_w,
            overlay=scenario.training_overlay if cfg.dc_id == overlay_dc else None,
            ramps=scenario.replica_ramps.get(cfg.dc_id, ()),
            trace_store=trace_store,
            seeds=seeds,
            stochastic_itl=stochastic_itl,
            dt=dc_dt,
        )
    grid = Grid(feeder, load_profiles=scenario.tvl_profiles, pv_profiles=scenario.pv_profiles,
                dt=grid_dt, tol=tol, max_iter=max_iter)
    return dcs, grid


def run_episode(feeder: FeederModel, datacenters: Sequence[DatacenterConfig], controller: Controller,
                scenario: Optional[Scenario] = None, duration_s=3600, base_dt=Fraction(1, 10), seed: int = 0,
                dc_dt=None, grid_dt=None, stochastic_itl: bool = False,
                trace_store: Optional[TraceStore] = None) -> EpisodeLog:
    """Run one episode and return its complete log.

    Within a tick the order is datacenter(s), grid, controller. Commands are
    applied immediately and take effect at the target's next step. Power
    samples accumulated since the grid's previous step are averaged by the
    grid.
    """
    base_dt = as_fraction(base_dt)
    duration = as_fraction(duration_s)
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    dc_dt = base_dt if dc_dt is None else as_fraction(dc_dt)
    grid_dt = base_dt if grid_dt is None else as_fraction(grid_dt)
    if scenario is None:
        from dcgrid.scenario.model import empty_scenario

        scenario = empty_scenario(float(duration) or 1.0)
    seeds = SeedBank(seed)
    dcs, grid = build_components(feeder, datacenters, scenario, seeds, dc_dt, grid_dt, stochastic_itl, trace_store)
    for cfg in datacenters:
        if cfg.dc_id not in feeder.datacenters:
            raise RoutingError(f"datacenter {cfg.dc_id!r} has no attachment bus in feeder {feeder.name!r}")
    controller.reset()

    dc_sched = {k: ComponentSchedule(k, dc.dt_s, base_dt) for k, dc in dcs.items()}
    grid_sched = ComponentSchedule("grid", grid.dt_s, base_dt)
    ctrl_sched = ComponentSchedule(f"controller:{controller.name}", controller.dt_s, base_dt)

    n_ticks = int(duration // base_dt) + 1
    n_grid = int(duration // grid_dt) + 1
    n_dc = int(duration // dc_dt) + 1
    keys = _model_keys(datacenters)
    n_nodes = len(grid.v_index)

    times = np.empty(n_grid)
    volts = np.empty((n_grid, n_nodes))
    total_power = np.empty(n_grid)
    batch = {k: np.empty(n_grid, dtype=np.int64) for _, _, k in keys}
    itl = {k: np.empty(n_grid) for _, _, k in keys}
    tput = {k: np.empty(n_grid) for _, _, k in keys}
    regs = [r.id for r in feeder.regulators]
    taps = {r: np.empty(n_grid) for r in regs}
    dc_times = np.empty(n_dc)
    dc_power = {k: np.empty((n_dc, 3)) for k in dcs}
    deadlines = {k: next(d.spec.itl_deadline_s for d in cfg.deployments if d.label == lbl)
                 for cfg in datacenters for dc_id, lbl, k in keys if dc_id == cfg.dc_id}

    events = EventLog()
    events.emit(0.0, "loop", "episode_start", seed=seed, scenario=scenario.scenario_id,
                controller=controller.name, duration_s=float(duration))
    clock = SimulationClock(base_dt)
    samples: dict[str, list] = {k: [] for k in dcs}
    g = 0
    dc_row = {k: 0 for k in dcs}

    for tick in range(n_ticks):
        t = clock.time_s
        for dc_id, dc in dcs.items():
            sched = dc_sched[dc_id]
            if sched.due(tick):
                st = dc.step(clock)
                samples[dc_id].append(st.total_power_w)
                r = dc_row[dc_id]
                if dc_id == next(iter(dcs)):
                    dc_times[r] = t
                dc_power[dc_id][r] = st.total_power_w
                dc_row[dc_id] = r + 1
                sched.mark_stepped()
        if grid_sched.due(tick):
            gs = grid.step(clock, samples)
            for lst in samples.values():
                lst.clear()
            times[g] = t
            volts[g] = gs.voltages.pu
            total_power[g] = sum(grid.dc_power_w.values())
            for dc_id, lbl, k in keys:
                st = dcs[dc_id].state
                batch[k][g] = st.batch_size_by_model[lbl]
                itl[k][g] = st.itl_by_model[lbl]
                tput[k][g] = st.throughput_by_model[lbl]
            for r in regs:
                taps[r][g] = gs.tap_positions[r]
            g += 1
            grid_sched.mark_stepped()
        if ctrl_sched.due(tick):
            for cmd in controller.step(clock, dcs, grid, events):
                route_command(cmd, dcs, grid, events, t, source=f"controller:{controller.name}")
            ctrl_sched.mark_stepped()
        clock.advance()

    counts = {s.component_id: s.steps for s in (*dc_sched.values(), grid_sched, ctrl_sched)}
    events.emit(float(duration), "loop", "episode_end", steps=counts)
    return EpisodeLog(
        seed=seed,
        duration_s=float(duration),
        grid_dt_s=float(grid_dt),
        dc_dt_s=float(dc_dt),
        times=times[:g],
        v_index=grid.v_index,
        voltages=volts[:g],
        total_power_w=total_power[:g],
        dc_times=dc_times[: min(dc_row.values(), default=0)],
        dc_power_w={k: v[: dc_row[k]] for k, v in dc_power.items()},
        batch_size={k: v[:g] for k, v in batch.items()},
        itl_s={k: v[:g] for k, v in itl.items()},
        throughput_tps={k: v[:g] for k, v in tput.items()},
        taps={k: v[:g] for k, v in taps.items()},
        deadlines_s=deadlines,
        events=events,
        step_counts=counts,
    )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_episode(log: EpisodeLog, outdir, summary_extra: Optional[dict] = None) -> dict:
    """Write ``episode.csv``, ``events.jsonl`` and ``summary.json``; returns the summary."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    labels = list(log.batch_size)
    header = ["time_s", "vmin_pu", "vmax_pu", "total_power_w"]
    header += [f"batch_size/{k}" for k in labels] + [f"itl_s/{k}" for k in labels]
    header += [f"throughput_tps/{k}" for k in labels] + [f"tap/{r}" for r in log.taps]
    vmin, vmax = log.vmin, log.vmax
    with open(out / "episode.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(log.times)):
            row = [log.times[i], vmin[i], vmax[i], log.total_power_w[i]]
            row += [log.batch_size[k][i] for k in labels] + [log.itl_s[k][i] for k in labels]
            row += [log.throughput_tps[k][i] for k in labels] + [log.taps[r][i] for r in log.taps]
            w.writerow([_fmt(x) for x in row])
    with open(out / "events.jsonl", "w") as fh:
        for rec in log.events:
            fh.write(rec.to_json() + "\n")
    summary = log.metrics().to_dict()
    summary["seed"] = log.seed
    summary.update(summary_extra or {})
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
