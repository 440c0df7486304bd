"""Loading a feeder plus its datacenter deployments from one JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from dcgrid.datacenter.power_range import match_peak_replicas, replica_power_w
from dcgrid.datacenter.spec import InferenceModelSpec, ModelDeployment, StepSchedule, load_spec
from dcgrid.grid.feeder import FeederModel, load_feeder
from dcgrid.sim import DatacenterConfig


def bundled_path(name: str = "system13.json") -> Path:
    return Path(str(resources.files("dcgrid") / "data" / name))


@dataclass
class SystemConfig:
    feeder: FeederModel
    datacenters: tuple[DatacenterConfig, ...]
    source: dict

    def specs(self) -> dict[str, InferenceModelSpec]:
        return {d.label: d.spec for dc in self.datacenters for d in dc.deployments}

    def with_specs(self, specs: dict[str, InferenceModelSpec], replicas: Optional[dict[str, int]] = None) -> "SystemConfig":
        """Copy with some model specs (and optionally replica counts) replaced by label."""
        replicas = replicas or {}
        dcs = []
        for dc in self.datacenters:
            deps = []
            for d in dc.deployments:
                spec = specs.get(d.label, d.spec)
                n = replicas.get(d.label, d.replicas)
                batch = d.batch_size if d.batch_size in spec.feasible_batch_sizes else spec.feasible_batch_sizes[-1]
                deps.append(ModelDeployment(spec, n, batch, None, d.phase_share))
            dcs.append(DatacenterConfig(dc.dc_id, tuple(deps), dc.base_load_w))
        return SystemConfig(self.feeder, tuple(dcs), self.source)


def deadline_variant(system: SystemConfig, itl_deadline_s: float) -> SystemConfig:
    """Every model gets ``itl_deadline_s``; replicas are re-sized so each model keeps its original peak
    power at its largest feasible batch, where it also starts."""
    dcs = []
    for dc in system.datacenters:
        deps = []
        for d in dc.deployments:
            peak = d.replicas * replica_power_w(d.spec, d.spec.feasible_batch_sizes[-1])
            spec = d.spec.with_deadline(itl_deadline_s)
            n = match_peak_replicas(spec, peak)
            deps.append(ModelDeployment(spec, n, spec.feasible_batch_sizes[-1], None, d.phase_share))
        dcs.append(DatacenterConfig(dc.dc_id, tuple(deps), dc.base_load_w))
    return SystemConfig(system.feeder, tuple(dcs), system.source)


def _deployment(entry: dict, base: Path) -> ModelDeployment:
    spec = InferenceModelSpec.from_dict(entry["spec"]) if isinstance(entry["spec"], dict) else load_spec(base / entry["spec"])
    schedule = entry.get("replica_schedule")
    return ModelDeployment(
        spec=spec,
        replicas=int(entry["replicas"]),
        batch_size=int(entry.get("batch_size", spec.feasible_batch_sizes[-1])),
        replica_schedule=StepSchedule(tuple(schedule["starts"]), tuple(schedule["values"])) if schedule else None,
        phase_share=tuple(entry.get("phase_share", (1 / 3, 1 / 3, 1 / 3))),
    )


def system_from_dict(doc: dict, base_dir=".") -> SystemConfig:
    """``doc["feeder"]`` and each deployment's ``spec`` may be inline objects or paths relative to ``base_dir``."""
    base = Path(base_dir)
    feeder = FeederModel.from_dict(doc["feeder"]) if isinstance(doc["feeder"], dict) else load_feeder(base / doc["feeder"])
    dcs = tuple(
        DatacenterConfig(dc["dc_id"], tuple(_deployment(e, base) for e in dc["deployments"]), float(dc.get("base_load_w", 0.0)))
        for dc in doc["datacenters"]
    )
    return SystemConfig(feeder, dcs, doc)


def load_system(path=None) -> SystemConfig:
    """Load a system document; the bundled 13-bus system when ``path`` is None."""
    path = Path(path) if path is not None else bundled_path()
    with open(path) as fh:
        return system_from_dict(json.load(fh), path.parent)
