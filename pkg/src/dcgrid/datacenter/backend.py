"""Batch-size-controllable datacenter component."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from dcgrid.clock import SimulationClock, as_fraction
from dcgrid.commands import RoutingError, SetBatchSize, SetReplicas
from dcgrid.datacenter.spec import ModelDeployment, SpecError, StepSchedule, TrainingOverlay
from dcgrid.datacenter.traces import TraceStore, trace_power_w
from dcgrid.events import EventLog
from dcgrid.rng import SeedBank


@dataclass(frozen=True)
class ReplicaRamp:
    """Linear move of the replica multiplier to ``amplitude`` over ``[start_s, start_s + duration_s]``."""

    start_s: float
    duration_s: float
    amplitude: float

    def __post_init__(self) -> None:
        if self.amplitude <= 0 or self.duration_s < 0:
            raise SpecError("ramp amplitude must be > 0 and duration >= 0")

    def to_dict(self) -> dict:
        return {"start_s": self.start_s, "duration_s": self.duration_s, "amplitude": self.amplitude}


def ramp_multiplier(ramps: Sequence[ReplicaRamp], t: float) -> float:
    level = 1.0
    for ramp in sorted(ramps, key=lambda r: r.start_s):
        if t < ramp.start_s:
            break
        end = ramp.start_s + ramp.duration_s
        if t >= end:
            level = ramp.amplitude
        else:
            level += (ramp.amplitude - level) * (t - ramp.start_s) / ramp.duration_s
            break
    return level


@dataclass
class DatacenterState:
    time_s: float
    batch_size_by_model: dict[str, int]
    itl_by_model: dict[str, float]
    throughput_by_model: dict[str, float]
    active_replicas_by_model: dict[str, int]
    total_power_w: tuple[float, float, float]
    inference_power_w: float = 0.0
    overlay_power_w: float = 0.0

    @property
    def power_w(self) -> float:
        return float(sum(self.total_power_w))


@dataclass
class Datacenter:
    """Simulates one site: inference deployments, constant base load and an optional training overlay.

    Per-replica power comes from the model's logistic fit unless a
    :class:`TraceStore` holds a trace for the ``(label, batch)`` pair.
    """

    dc_id: str
    deployments: list[ModelDeployment]
    base_load_w: float = 0.0
    overlay: Optional[TrainingOverlay] = None
    ramps: Sequence[ReplicaRamp] = ()
    trace_store: Optional[TraceStore] = None
    seeds: Optional[SeedBank] = None
    stochastic_itl: bool = False
    dt: Fraction = field(default=Fraction(1, 10))
    state: Optional[DatacenterState] = field(default=None, init=False)

    def __post_init__(self) -> None:
        self.dt = as_fraction(self.dt)
        labels = [d.label for d in self.deployments]
        if len(set(labels)) != len(labels):
            raise SpecError(f"{self.dc_id}: duplicate model labels {labels}")
        if self.base_load_w < 0:
            raise SpecError(f"{self.dc_id}: base load must be nonnegative")
        self._by_label = {d.label: d for d in self.deployments}
        self.reset()

    @property
    def dt_s(self) -> Fraction:
        return self.dt

    def reset(self) -> None:
        self._batch = {d.label: d.batch_size for d in self.deployments}
        self._schedule = {d.label: d.replica_schedule for d in self.deployments}
        self._curve_cache: dict[tuple[str, int], tuple[float, float, float]] = {}
        bank = self.seeds or SeedBank(0)
        self._rng = {d.label: bank.generator(self.dc_id, f"itl/{d.label}") for d in self.deployments}
        self.state = None

    def deployment(self, label: str) -> ModelDeployment:
        try:
            return self._by_label[label]
        except KeyError:
            raise RoutingError(f"datacenter {self.dc_id!r} has no model {label!r}") from None

    def _curves(self, dep: ModelDeployment, batch: int) -> tuple[float, float, float]:
        key = (dep.label, batch)
        hit = self._curve_cache.get(key)
        if hit is None:
            spec = dep.spec
            x = math.log2(batch)
            itl_fit = spec.itl_fit
            if self.trace_store is not None and dep.label in self.trace_store.itl_fits:
                itl_fit = self.trace_store.itl_fits[dep.label]
            hit = (spec.power_fit(x), spec.throughput_fit(x), itl_fit(x))
            self._curve_cache[key] = hit
        return hit

    def active_replicas(self, label: str, t: float) -> int:
        base = self._schedule[label](t)
        return int(math.floor(base * ramp_multiplier(self.ramps, t) + 0.5)) if self.ramps else base

    def step(self, clock: SimulationClock) -> DatacenterState:
        t = clock.time_s
        phase = [0.0, 0.0, 0.0]
        batches, itl, tput, active = {}, {}, {}, {}
        inference = 0.0
        for dep in self.deployments:
            label = dep.label
            b = self._batch[label]
            n = self.active_replicas(label, t)
            p_rep, t_rep, itl_mean = self._curves(dep, b)
            if self.trace_store is not None and self.trace_store.has(label, b):
                p_rep = trace_power_w(self.trace_store, label, b, t)
            p = n * p_rep
            inference += p
            share = dep.phase_share
            phase[0] += p * share[0]
            phase[1] += p * share[1]
            phase[2] += p * share[2]
            if self.stochastic_itl and dep.spec.itl_noise is not None:
                itl_mean = itl_mean * dep.spec.itl_noise.sample_factor(self._rng[label])
            batches[label] = b
            itl[label] = itl_mean
            tput[label] = n * t_rep
            active[label] = n
        overlay = self.overlay.power_w(t) if self.overlay is not None else 0.0
        shared = (self.base_load_w + overlay) / 3.0
        self.state = DatacenterState(
            time_s=t,
            batch_size_by_model=batches,
            itl_by_model=itl,
            throughput_by_model=tput,
            active_replicas_by_model=active,
            total_power_w=(phase[0] + shared, phase[1] + shared, phase[2] + shared),
            inference_power_w=inference,
            overlay_power_w=overlay,
        )
        return self.state

    def apply_command(self, command, events: Optional[EventLog] = None, time_s: float = 0.0) -> None:
        if isinstance(command, SetBatchSize):
            for label, batch in command.batch_sizes.items():
                dep = self.deployment(label)
                dep.spec.check_batch(int(batch))
            self._batch.update({k: int(v) for k, v in command.batch_sizes.items()})
        elif isinstance(command, SetReplicas):
            for label, n in command.replicas.items():
                self.deployment(label)
                if int(n) < 0:
                    raise SpecError(f"{self.dc_id}/{label}: replica count must be nonnegative")
            self._schedule.update({k: StepSchedule.constant(int(v)) for k, v in command.replicas.items()})
        else:
            raise RoutingError(f"datacenter {self.dc_id!r} cannot apply {type(command).__name__}")

    def batch_size(self, label: str) -> int:
        return self._batch[label]

    def phase_share_matrix(self) -> np.ndarray:
        return np.array([d.phase_share for d in self.deployments])
