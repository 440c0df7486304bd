"""Inference model specs, deployments and training overlays."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from dcgrid.datacenter.fits import LogisticFit


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ITLNoise:
    """Two-component lognormal multiplicative noise on the fitted ITL mean."""

    weights: tuple[float, float] = (0.9, 0.1)
    log_means: tuple[float, float] = (0.0, 0.25)
    log_sigmas: tuple[float, float] = (0.05, 0.15)

    def sample_factor(self, rng: np.random.Generator) -> float:
        c = 0 if rng.random() < self.weights[0] / sum(self.weights) else 1
        return float(np.exp(rng.normal(self.log_means[c], self.log_sigmas[c])))

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "log_means": list(self.log_means), "log_sigmas": list(self.log_sigmas)}

    @classmethod
    def from_dict(cls, d: dict) -> "ITLNoise":
        return cls(tuple(d["weights"]), tuple(d["log_means"]), tuple(d["log_sigmas"]))


@dataclass(frozen=True)
class InferenceModelSpec:
    """Per-replica power, throughput and ITL curves plus serving constraints.

    Curves are evaluated at ``x = log2(batch)``. ``feasible_batch_sizes``
    defaults to every ladder entry whose fitted ITL meets the deadline.
    """

    label: str
    batch_ladder: tuple[int, ...]
    itl_deadline_s: float
    power_fit: LogisticFit
    throughput_fit: LogisticFit
    itl_fit: LogisticFit
    gpus_per_replica: int = 1
    feasible_batch_sizes: Optional[tuple[int, ...]] = None
    itl_noise: Optional[ITLNoise] = None

    def __post_init__(self) -> None:
        ladder = tuple(int(b) for b in self.batch_ladder)
        if not ladder or any(b <= 0 for b in ladder) or any(a >= b for a, b in zip(ladder, ladder[1:])):
            raise SpecError(f"{self.label}: batch ladder must be strictly increasing positive integers")
        object.__setattr__(self, "batch_ladder", ladder)
        if self.itl_deadline_s <= 0:
            raise SpecError(f"{self.label}: itl_deadline_s must be positive")
        if self.gpus_per_replica < 1:
            raise SpecError(f"{self.label}: gpus_per_replica must be >= 1")
        if self.feasible_batch_sizes is None:
            feasible = tuple(b for b in ladder if self.itl_fit.at_batch(b) <= self.itl_deadline_s)
        else:
            feasible = tuple(sorted(int(b) for b in self.feasible_batch_sizes))
            if not set(feasible) <= set(ladder):
                raise SpecError(f"{self.label}: feasible batch sizes {feasible} not a subset of the ladder")
            late = [b for b in feasible if self.itl_fit.at_batch(b) > self.itl_deadline_s]
            if late:
                raise SpecError(f"{self.label}: batches {late} miss the {self.itl_deadline_s} s ITL deadline")
        if not feasible:
            raise SpecError(f"{self.label}: no batch size meets the {self.itl_deadline_s} s ITL deadline")
        object.__setattr__(self, "feasible_batch_sizes", feasible)

    def check_batch(self, batch: int) -> None:
        if batch not in self.batch_ladder:
            raise SpecError(f"{self.label}: batch {batch} is not on the ladder {self.batch_ladder}")

    @property
    def x_bounds(self) -> tuple[float, float]:
        return math.log2(self.feasible_batch_sizes[0]), math.log2(self.feasible_batch_sizes[-1])

    def with_deadline(self, itl_deadline_s: float) -> "InferenceModelSpec":
        """Same curves, new deadline; feasibility is re-derived from the ITL fit."""
        return InferenceModelSpec(
            label=self.label,
            batch_ladder=self.batch_ladder,
            itl_deadline_s=itl_deadline_s,
            power_fit=self.power_fit,
            throughput_fit=self.throughput_fit,
            itl_fit=self.itl_fit,
            gpus_per_replica=self.gpus_per_replica,
            itl_noise=self.itl_noise,
        )

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "batch_ladder": list(self.batch_ladder),
            "feasible_batch_sizes": list(self.feasible_batch_sizes),
            "itl_deadline_s": self.itl_deadline_s,
            "gpus_per_replica": self.gpus_per_replica,
            "power_fit": self.power_fit.to_dict(),
            "throughput_fit": self.throughput_fit.to_dict(),
            "itl_fit": self.itl_fit.to_dict(),
        }
        if self.itl_noise is not None:
            d["itl_noise"] = self.itl_noise.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceModelSpec":
        try:
            return cls(
                label=d["label"],
                batch_ladder=tuple(d["batch_ladder"]),
                itl_deadline_s=float(d["itl_deadline_s"]),
                power_fit=LogisticFit.from_dict(d["power_fit"]),
                throughput_fit=LogisticFit.from_dict(d["throughput_fit"]),
                itl_fit=LogisticFit.from_dict(d["itl_fit"]),
                gpus_per_replica=int(d.get("gpus_per_replica", 1)),
                feasible_batch_sizes=tuple(d["feasible_batch_sizes"]) if d.get("feasible_batch_sizes") else None,
                itl_noise=ITLNoise.from_dict(d["itl_noise"]) if d.get("itl_noise") else None,
            )
        except KeyError as exc:
            raise SpecError(f"model spec missing field {exc}") from None


def load_spec(path) -> InferenceModelSpec:
    with open(path) as fh:
        return InferenceModelSpec.from_dict(json.load(fh))


def save_spec(spec: InferenceModelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant integer schedule: ``value(t)`` is the last step with start <= t."""

    starts: tuple[float, ...]
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.starts) != len(self.values) or not self.starts:
            raise SpecError("schedule needs matching, nonempty starts and values")
        if any(a >= b for a, b in zip(self.starts, self.starts[1:])):
            raise SpecError("schedule start times must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise SpecError("schedule values must be nonnegative")

    @classmethod
    def constant(cls, value: int) -> "StepSchedule":
        return cls((0.0,), (int(value),))

    def __call__(self, t: float) -> int:
        i = bisect.bisect_right(self.starts, t) - 1
        return self.values[max(i, 0)]


@dataclass
class ModelDeployment:
    spec: InferenceModelSpec
    replicas: int
    batch_size: int = 128
    replica_schedule: Optional[StepSchedule] = None
    phase_share: Sequence[float] = field(default=(1 / 3, 1 / 3, 1 / 3))

    def __post_init__(self) -> None:
        self.spec.check_batch(self.batch_size)
        share = np.asarray(self.phase_share, dtype=float)
        if share.shape != (3,) or np.any(share < 0) or not np.isclose(share.sum(), 1.0):
            raise SpecError(f"{self.spec.label}: phase_share must be a 3-vector on the simplex")
        self.phase_share = tuple(float(s) for s in share)
        if self.replica_schedule is None:
            self.replica_schedule = StepSchedule.constant(self.replicas)

    @property
    def label(self) -> str:
        return self.spec.label


@dataclass(frozen=True)
class TrainingOverlay:
    """Exogenous training load: ``gpu_count(t) * watts_per_gpu``, active on ``[start_s, start_s + duration_s]``."""

    start_s: float
    duration_s: float
    gpu_count: int
    watts_per_gpu: float

    def __post_init__(self) -> None:
        if self.watts_per_gpu <= 0 or self.gpu_count < 0 or self.duration_s < 0:
            raise SpecError("training overlay needs positive watts, nonnegative GPUs and duration")

    def gpus(self, t: float) -> int:
        return self.gpu_count if self.start_s <= t <= self.start_s + self.duration_s else 0

    def power_w(self, t: float) -> float:
        return self.gpus(t) * self.watts_per_gpu

    def to_dict(self) -> dict:
        return {"start_s": self.start_s, "duration_s": self.duration_s,
                "gpu_count": self.gpu_count, "watts_per_gpu": self.watts_per_gpu}
