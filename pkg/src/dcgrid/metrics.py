"""Episode evaluation metrics and the per-step RL reward signal."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional

import numpy as np

V_LO = 0.95
V_HI = 1.05


@dataclass(frozen=True)
class MetricsSummary:
    integral_voltage_violation: float
    mean_token_throughput: float
    latency_violation_rate: float
    batch_switch_count: int

    def to_dict(self) -> dict:
        return {
            "integral_voltage_violation_pus": self.integral_voltage_violation,
            "mean_throughput_tps": self.mean_token_throughput,
            "batch_switch_count": self.batch_switch_count,
            "latency_violation_rate": self.latency_violation_rate,
        }


# column order used in tables: violation, throughput, batch switches, ITL violations
METRIC_COLUMNS = (
    "integral_voltage_violation_pus",
    "mean_throughput_tps",
    "batch_switch_count",
    "latency_violation_rate",
)


def _as_2d(series) -> np.ndarray:
    if isinstance(series, Mapping):
        series = np.column_stack([np.asarray(v, dtype=float) for v in series.values()]) if series else np.zeros((0, 0))
    arr = np.asarray(series, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def voltage_violation_split(voltages, dt: float, v_lo: float = V_LO, v_hi: float = V_HI) -> tuple[float, float]:
    """Under- and overvoltage parts of the integral violation (pu*s)."""
    v = _as_2d(voltages)
    under = float(np.maximum(v_lo - v, 0.0).sum() * dt)
    over = float(np.maximum(v - v_hi, 0.0).sum() * dt)
    return under, over


def integral_voltage_violation(voltages, dt: float, v_lo: float = V_LO, v_hi: float = V_HI) -> float:
    """Sum over samples and bus-phases of out-of-band deviation times ``dt``.

    ``voltages`` is (samples x bus-phases) in pu.
    """
    under, over = voltage_violation_split(voltages, dt, v_lo, v_hi)
    return under + over


def mean_token_throughput(throughput, dt: float, duration_s: Optional[float] = None) -> float:
    """Time-average of total token throughput across models.

    ``duration_s`` defaults to ``samples * dt`` so a constant series averages
    to itself.
    """
    t = _as_2d(throughput)
    if t.shape[0] == 0:
        return 0.0
    horizon = t.shape[0] * dt if duration_s is None else duration_s
    if horizon <= 0:
        return float(t.sum(axis=1).mean())
    return float(t.sum() * dt / horizon)


def latency_violation_rate(itl, deadlines) -> float:
    """Fraction of (sample, model) pairs whose ITL exceeds the model's deadline."""
    x = _as_2d(itl)
    if x.size == 0:
        return 0.0
    d = np.asarray(list(deadlines.values()) if isinstance(deadlines, Mapping) else deadlines, dtype=float)
    return float(np.mean(x > d[None, :]))


def batch_switch_count(batches) -> int:
    b = _as_2d(batches)
    if b.shape[0] < 2:
        return 0
    return int(np.count_nonzero(b[1:] != b[:-1]))


@dataclass(frozen=True)
class RewardWeights:
    w_v: float = 5000.0
    w_t: float = 5e-2
    w_l: float = 1e-2
    w_s: float = 0.5

    def __post_init__(self) -> None:
        if min(asdict(self).values()) < 0:
            raise ValueError("reward weights must be nonnegative")


def ppo_reward(voltages, batch_sizes: Mapping[str, int], prev_batch_sizes: Mapping[str, int],
               itl: Mapping[str, float], specs: Mapping, weights: RewardWeights = RewardWeights(),
               v_lo: float = V_LO, v_hi: float = V_HI) -> float:
    """``-w_v * P_V + w_t * T - w_l * P_L - w_s * P_S`` for one control step.

    Throughput is each model's fitted per-replica throughput normalized by its
    value at the largest feasible batch; the switching penalty sums
    ``|log2 b - log2 b_prev|`` over models.
    """
    v = np.asarray(voltages, dtype=float)
    p_v = float(np.sum(np.maximum(v_lo - v, 0.0) ** 2 + np.maximum(v - v_hi, 0.0) ** 2))
    tput = 0.0
    p_l = 0.0
    p_s = 0.0
    for label, b in batch_sizes.items():
        spec = specs[label]
        tput += spec.throughput_fit.at_batch(b) / spec.throughput_fit.at_batch(spec.feasible_batch_sizes[-1])
        target = spec.itl_deadline_s
        p_l += max(0.0, (itl[label] - target) / target)
        p_s += abs(math.log2(b) - math.log2(prev_batch_sizes[label]))
    return -weights.w_v * p_v + weights.w_t * tput - weights.w_l * p_l - weights.w_s * p_s


def system_summary(voltages, v_lo: float = V_LO, v_hi: float = V_HI) -> tuple[float, float, float]:
    """Three-scalar voltage observation: max undervoltage, max overvoltage, fraction of bus-phases violating."""
    v = np.asarray(voltages, dtype=float)
    under = np.maximum(v_lo - v, 0.0)
    over = np.maximum(v - v_hi, 0.0)
    return float(under.max(initial=0.0)), float(over.max(initial=0.0)), float(np.mean((under > 0) | (over > 0)))
