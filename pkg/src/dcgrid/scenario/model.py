"""Scenario data: disturbance profiles, replica ramps and the training overlay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dcgrid.datacenter.backend import ReplicaRamp
from dcgrid.datacenter.spec import TrainingOverlay

# knots over normalized episode time; the middle knot of three-knot shapes moves with `center`
SHAPES: dict[str, tuple[tuple[float, float], ...]] = {
    "flat": ((0.0, 1.0), (1.0, 1.0)),
    "rising": ((0.0, 0.2), (1.0, 1.0)),
    "falling": ((0.0, 1.0), (1.0, 0.2)),
    "rising_falling": ((0.0, 0.1), (0.5, 1.0), (1.0, 0.1)),
    "midday_dip": ((0.0, 1.0), (0.5, 0.3), (1.0, 1.0)),
}


@dataclass(frozen=True)
class Profile:
    """Piecewise-linear fraction of nameplate: ``peak * shape(t / horizon)``."""

    shape: str
    peak: float
    horizon_s: float
    center: float = 0.5

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ValueError(f"unknown profile shape {self.shape!r}; choose from {sorted(SHAPES)}")
        if self.peak < 0 or self.horizon_s <= 0:
            raise ValueError("profile peak must be >= 0 and horizon > 0")
        knots = SHAPES[self.shape]
        xs = [k[0] for k in knots]
        if len(knots) == 3:
            xs[1] = self.center
        object.__setattr__(self, "_xs", np.array(xs))
        object.__setattr__(self, "_ys", np.array([k[1] for k in knots]))

    def __call__(self, t: float) -> float:
        return self.peak * float(np.interp(t / self.horizon_s, self._xs, self._ys))

    def to_dict(self) -> dict:
        return {"shape": self.shape, "peak": self.peak, "horizon_s": self.horizon_s, "center": self.center}

    @classmethod
    def from_dict(cls, d: dict) -> "Profile":
        return cls(d["shape"], float(d["peak"]), float(d["horizon_s"]), float(d.get("center", 0.5)))


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    seed: Optional[int] = None
    horizon_s: float = 3600.0
    pv_profiles: dict[str, Profile] = field(default_factory=dict)
    tvl_profiles: dict[str, Profile] = field(default_factory=dict)
    replica_ramps: dict[str, tuple[ReplicaRamp, ...]] = field(default_factory=dict)
    training_overlay: Optional[TrainingOverlay] = None
    overlay_datacenter: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "horizon_s": self.horizon_s,
            "pv_profiles": {k: p.to_dict() for k, p in sorted(self.pv_profiles.items())},
            "tvl_profiles": {k: p.to_dict() for k, p in sorted(self.tvl_profiles.items())},
            "replica_ramps": {k: [r.to_dict() for r in v] for k, v in sorted(self.replica_ramps.items())},
            "training_overlay": self.training_overlay.to_dict() if self.training_overlay else None,
            "overlay_datacenter": self.overlay_datacenter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        overlay = d.get("training_overlay")
        return cls(
            scenario_id=d["scenario_id"],
            seed=d.get("seed"),
            horizon_s=float(d.get("horizon_s", 3600.0)),
            pv_profiles={k: Profile.from_dict(p) for k, p in d.get("pv_profiles", {}).items()},
            tvl_profiles={k: Profile.from_dict(p) for k, p in d.get("tvl_profiles", {}).items()},
            replica_ramps={k: tuple(ReplicaRamp(**r) for r in v) for k, v in d.get("replica_ramps", {}).items()},
            training_overlay=TrainingOverlay(**overlay) if overlay else None,
            overlay_datacenter=d.get("overlay_datacenter"),
        )


def canonical_scenario(horizon_s: float = 3600.0, datacenters=("dc0",)) -> Scenario:
    """Fixed stress instance: 2400 GPUs x 400 W training on [1000, 2000] s and a
    replica ramp down to 50% over [2500, 3000] s at every datacenter."""
    return Scenario(
        scenario_id="canonical",
        horizon_s=horizon_s,
        pv_profiles={"pv": Profile("rising_falling", 1.0, horizon_s)},
        tvl_profiles={"tvl": Profile("flat", 1.0, horizon_s)},
        replica_ramps={dc: (ReplicaRamp(2500.0, 500.0, 0.5),) for dc in datacenters},
        training_overlay=TrainingOverlay(1000.0, 1000.0, 2400, 400.0),
    )


def empty_scenario(horizon_s: float = 3600.0) -> Scenario:
    return Scenario(scenario_id="quiet", horizon_s=horizon_s)
