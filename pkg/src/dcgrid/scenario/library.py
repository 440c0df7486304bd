"""Screening sampled scenarios and assembling train/test libraries."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from joblib import Parallel, delayed

from dcgrid.clock import as_fraction
from dcgrid.controllers import NoCoordination, OFOController, OFOParams
from dcgrid.grid.feeder import FeederModel
from dcgrid.grid.powerflow import PowerFlowDivergence
from dcgrid.hashing import config_hash
from dcgrid.scenario.model import Scenario
from dcgrid.scenario.sampling import SamplingConfig, sample_scenario
from dcgrid.sim import DatacenterConfig, run_episode


@dataclass(frozen=True)
class ScreeningConfig:
    min_baseline_pus: float = 1.0
    min_recovery: float = 0.70
    ofo: OFOParams = field(default_factory=OFOParams)
    base_dt: Fraction = Fraction(1, 10)

    def to_dict(self) -> dict:
        return {"min_baseline_pus": self.min_baseline_pus, "min_recovery": self.min_recovery,
                "ofo": self.ofo.to_dict(), "base_dt": str(as_fraction(self.base_dt))}


@dataclass(frozen=True)
class ScreeningResult:
    seed: Optional[int]
    scenario_id: str
    accepted: bool
    baseline_integral: Optional[float]
    ofo_integral: Optional[float]
    violation_type: Optional[str]
    reason: str = ""

    @property
    def recovery(self) -> Optional[float]:
        if not self.baseline_integral:
            return None
        return (self.baseline_integral - self.ofo_integral) / self.baseline_integral

    def to_dict(self) -> dict:
        return {"seed": self.seed, "scenario_id": self.scenario_id, "accepted": self.accepted,
                "baseline_integral": self.baseline_integral, "ofo_integral": self.ofo_integral,
                "violation_type": self.violation_type, "reason": self.reason}


def screening_decision(baseline: float, ofo: float, config: ScreeningConfig = ScreeningConfig()) -> tuple[bool, str]:
    if not baseline > config.min_baseline_pus:
        return False, f"baseline {baseline:.4g} pu*s does not exceed {config.min_baseline_pus}"
    recovery = (baseline - ofo) / baseline
    if recovery < config.min_recovery:
        return False, f"OFO recovery {recovery:.3f} below {config.min_recovery}"
    return True, ""


def violation_type(under: float, over: float) -> str:
    if under > 0 and over > 0:
        return "both"
    if under > 0:
        return "under"
    if over > 0:
        return "over"
    return "none"


def screen_scenario(scenario: Scenario, feeder: FeederModel, datacenters: Sequence[DatacenterConfig],
                    config: ScreeningConfig = ScreeningConfig()) -> ScreeningResult:
    """Run the uncoordinated and OFO episodes and apply both acceptance inequalities."""
    try:
        base = run_episode(feeder, datacenters, NoCoordination(), scenario, scenario.horizon_s,
                           config.base_dt, seed=scenario.seed or 0)
    except PowerFlowDivergence as exc:
        return ScreeningResult(scenario.seed, scenario.scenario_id, False, None, None, None,
                               f"power flow diverged in baseline run: {exc}")
    under, over = base.violation_split()
    vtype = violation_type(under, over)
    baseline = under + over
    if not baseline > config.min_baseline_pus:
        # the OFO run cannot change the outcome
        ok, why = screening_decision(baseline, baseline, config)
        return ScreeningResult(scenario.seed, scenario.scenario_id, False, baseline, None, vtype, why)
    try:
        ofo = run_episode(feeder, datacenters, OFOController(config.ofo), scenario, scenario.horizon_s,
                          config.base_dt, seed=scenario.seed or 0)
    except PowerFlowDivergence as exc:
        return ScreeningResult(scenario.seed, scenario.scenario_id, False, baseline, None, vtype,
                               f"power flow diverged in OFO run: {exc}")
    ofo_integral = ofo.metrics().integral_voltage_violation
    ok, why = screening_decision(baseline, ofo_integral, config)
    return ScreeningResult(scenario.seed, scenario.scenario_id, ok, baseline, ofo_integral, vtype, why)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@dataclass
class ScenarioLibrary:
    tag: str
    seed_start: int
    n_candidates: int
    records: list[ScreeningResult]
    scenarios: dict[int, Scenario]
    config: dict

    @property
    def seed_range(self) -> range:
        return range(self.seed_start, self.seed_start + self.n_candidates)

    @property
    def accepted(self) -> list[ScreeningResult]:
        return [r for r in self.records if r.accepted]

    def accepted_scenarios(self) -> list[Scenario]:
        return [self.scenarios[r.seed] for r in self.accepted]

    def summary(self) -> dict:
        acc = self.accepted
        n = len(acc)
        if n == 0:
            return {"n": 0, "baseline_mean": None, "ofo_mean": None, "recovery": None,
                    "under_pct": None, "over_pct": None, "both_pct": None}
        b = sum(r.baseline_integral for r in acc) / n
        o = sum(r.ofo_integral for r in acc) / n
        pct = lambda kind: 100.0 * sum(r.violation_type == kind for r in acc) / n
        return {"n": n, "baseline_mean": b, "ofo_mean": o, "recovery": (b - o) / b,
                "under_pct": pct("under"), "over_pct": pct("over"), "both_pct": pct("both")}

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "seed_start": self.seed_start,
            "n_candidates": self.n_candidates,
            "config_hash": config_hash(self.config),
            "config": self.config,
            "summary": self.summary(),
            "records": [
                {**r.to_dict(), "scenario": self.scenarios[r.seed].to_dict() if r.accepted else None}
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioLibrary":
        records, scenarios = [], {}
        for rec in d["records"]:
            scen = rec.pop("scenario", None)
            records.append(ScreeningResult(**rec))
            if scen is not None:
                scenarios[rec["seed"]] = Scenario.from_dict(scen)
        return cls(d["tag"], int(d["seed_start"]), int(d["n_candidates"]), records, scenarios, d.get("config", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ScenarioLibrary":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _screen_seed(seed, sampling, feeder, datacenters, screening):
    scenario = sample_scenario(seed, sampling)
    return scenario, screen_scenario(scenario, feeder, datacenters, screening)


def build_library(n_candidates: int, seed_start: int, tag: str, feeder: FeederModel,
                  datacenters: Sequence[DatacenterConfig], sampling: SamplingConfig = SamplingConfig(),
                  screening: ScreeningConfig = ScreeningConfig(), workers: int = 1,
                  system_config: Optional[dict] = None) -> ScenarioLibrary:
    """Screen seeds ``[seed_start, seed_start + n_candidates)``; records are kept in seed order."""
    if n_candidates < 0:
        raise ValueError("n_candidates must be nonnegative")
    seeds = range(seed_start, seed_start + n_candidates)
    if workers > 1 and n_candidates > 1:
        results = Parallel(n_jobs=workers)(
            delayed(_screen_seed)(s, sampling, feeder, datacenters, screening) for s in seeds)
    else:
        results = [_screen_seed(s, sampling, feeder, datacenters, screening) for s in seeds]
    config = {"sampling": sampling.to_dict(), "screening": screening.to_dict(),
              "system": system_config if system_config is not None else {"feeder": feeder.to_dict()}}
    return ScenarioLibrary(
        tag=tag,
        seed_start=seed_start,
        n_candidates=n_candidates,
        records=[r for _, r in results],
        scenarios={r.seed: s for s, r in results},
        config=config,
    )
