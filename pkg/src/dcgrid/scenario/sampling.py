"""Random scenario draws from independent uniform ranges."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

from dcgrid.datacenter.backend import ReplicaRamp
from dcgrid.datacenter.spec import TrainingOverlay
from dcgrid.rng import SeedBank
from dcgrid.scenario.model import SHAPES, Profile, Scenario

Range = tuple[float, float]


@dataclass(frozen=True)
class SamplingConfig:
    """Uniform ranges for every sampled quantity; times are in seconds."""

    horizon_s: float = 3600.0
    pv_ids: tuple[str, ...] = ("pv",)
    tvl_ids: tuple[str, ...] = ("tvl",)
    datacenters: tuple[str, ...] = ("dc0",)
    shapes: tuple[str, ...] = tuple(SHAPES)
    pv_peak: Range = (0.1, 1.0)
    tvl_peak: Range = (0.5, 1.5)
    shape_center: Range = (0.3, 0.7)
    overlay_probability: float = 0.69
    overlay_gpus: tuple[int, int] = (600, 2400)
    overlay_watts_per_gpu: float = 400.0
    overlay_start_s: Range = (0.0, 2700.0)
    overlay_duration_s: Range = (300.0, 1500.0)
    ramps_per_datacenter: tuple[int, int] = (1, 2)
    ramp_start_s: Range = (0.0, 3300.0)
    ramp_duration_s: Range = (60.0, 900.0)
    ramp_amplitude: Range = (0.4, 1.3)

    def __post_init__(self) -> None:
        if not 0.0 <= self.overlay_probability <= 1.0:
            raise ValueError("overlay probability must lie in [0, 1]")
        bad = [s for s in self.shapes if s not in SHAPES]
        if bad or not self.shapes:
            raise ValueError(f"unknown profile shapes {bad}")
        for name in ("pv_peak", "tvl_peak", "shape_center", "overlay_start_s", "overlay_duration_s",
                     "ramp_start_s", "ramp_duration_s", "ramp_amplitude"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        if self.ramp_amplitude[0] <= 0 or self.pv_peak[0] < 0 or self.tvl_peak[0] < 0:
            raise ValueError("ramp amplitudes must be positive and profile peaks nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingConfig":
        out = {}
        for k, v in d.items():
            if k not in cls.__dataclass_fields__:
                raise ValueError(f"unknown sampling option {k!r}")
            out[k] = tuple(v) if isinstance(v, list) else v
        return cls(**out)


def _u(rng, bounds: Sequence[float]) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def _clip(t: float, horizon: float) -> float:
    return min(max(t, 0.0), horizon)


def sample_scenario(seed: int, config: SamplingConfig = SamplingConfig()) -> Scenario:
    """Draw one scenario; a pure function of ``(seed, config)``."""
    bank = SeedBank(seed)
    H = config.horizon_s

    def profiles(ids, kind, peak):
        out = {}
        for pid in ids:
            rng = bank.generator("scenario", f"{kind}/{pid}")
            shape = config.shapes[int(rng.integers(len(config.shapes)))]
            out[pid] = Profile(shape, _u(rng, peak), H, _u(rng, config.shape_center))
        return out

    rng = bank.generator("scenario", "overlay")
    overlay = None
    if rng.random() < config.overlay_probability:
        start = _clip(_u(rng, config.overlay_start_s), H)
        duration = _clip(_u(rng, config.overlay_duration_s), H - start)
        gpus = int(rng.integers(config.overlay_gpus[0], config.overlay_gpus[1] + 1))
        overlay = TrainingOverlay(start, duration, gpus, config.overlay_watts_per_gpu)

    ramps = {}
    for dc in config.datacenters:
        rng = bank.generator("scenario", f"ramps/{dc}")
        lo, hi = config.ramps_per_datacenter
        count = int(rng.integers(lo, hi + 1))
        draws = sorted(
            (_u(rng, config.ramp_start_s), _u(rng, config.ramp_duration_s), _u(rng, config.ramp_amplitude))
            for _ in range(count)
        )
        drawn, free_from = [], 0.0
        for start, duration, amplitude in draws:
            # a later ramp waits for the previous one to finish
            start = _clip(max(start, free_from), H)
            duration = _clip(duration, H - start)
            drawn.append(ReplicaRamp(start, duration, amplitude))
            free_from = start + duration
        ramps[dc] = tuple(drawn)

    return Scenario(
        scenario_id=f"s{seed}",
        seed=seed,
        horizon_s=H,
        pv_profiles=profiles(config.pv_ids, "pv", config.pv_peak),
        tvl_profiles=profiles(config.tvl_ids, "tvl", config.tvl_peak),
        replica_ramps=ramps,
        training_overlay=overlay,
        overlay_datacenter=config.datacenters[0] if config.datacenters else None,
    )
