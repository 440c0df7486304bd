"""Feasible power range and match-peak replica sizing."""

from __future__ import annotations

import math
from dataclasses import dataclass

from dcgrid.datacenter.spec import InferenceModelSpec, SpecError


def replica_power_w(spec: InferenceModelSpec, batch: int) -> float:
    spec.check_batch(batch)
    return spec.power_fit.at_batch(batch)


@dataclass(frozen=True)
class PowerRange:
    min_w: float
    max_w: float

    @property
    def span_w(self) -> float:
        return self.max_w - self.min_w

    def __iter__(self):
        return iter((self.min_w, self.max_w, self.span_w))


def feasible_power_range_w(spec: InferenceModelSpec, replicas: int) -> PowerRange:
    powers = [replicas * replica_power_w(spec, b) for b in spec.feasible_batch_sizes]
    return PowerRange(min(powers), max(powers))


def match_peak_replicas(spec: InferenceModelSpec, target_peak_w: float) -> int:
    """Replica count whose power at the largest feasible batch hits ``target_peak_w``."""
    if target_peak_w <= 0:
        raise SpecError(f"target peak must be positive, got {target_peak_w}")
    peak = replica_power_w(spec, spec.feasible_batch_sizes[-1])
    if peak <= 0:
        raise SpecError(f"{spec.label}: non-positive peak replica power {peak}")
    n = math.floor(target_peak_w / peak + 0.5)
    if n < 1:
        raise SpecError(f"target {target_peak_w} W cannot support one {spec.label} replica ({peak:.1f} W)")
    return n


def power_curve_rows(spec: InferenceModelSpec, replicas: int) -> list[dict]:
    """Per-batch table behind the power-throughput curve."""
    feasible = set(spec.feasible_batch_sizes)
    rows = []
    for b in spec.batch_ladder:
        p = spec.power_fit.at_batch(b)
        rows.append({
            "batch": b,
            "power_w_per_replica": p,
            "dc_power_mw": replicas * p / 1e6,
            "throughput_tps": replicas * spec.throughput_fit.at_batch(b),
            "itl_s": spec.itl_fit.at_batch(b),
            "feasible": b in feasible,
        })
    return rows
