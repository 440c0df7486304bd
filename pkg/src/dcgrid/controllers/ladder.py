from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


def snap_to_ladder(x: float, ladder: Sequence[int]) -> int:
    """Ladder entry nearest to ``2**x`` in absolute batch units; ties go to the smaller batch."""
    if not ladder:
        raise ValueError("empty batch ladder")
    target = 2.0 ** x
    best = ladder[0]
    for b in ladder[1:]:
        if abs(b - target) < abs(best - target):
            best = b
    return int(best)


@dataclass
class LogBatchState:
    """Continuous log2-batch state with projection bounds."""

    x: float
    x_lo: float
    x_hi: float
    x_prev: float

    @classmethod
    def from_batch(cls, batch: int, feasible: Sequence[int]) -> "LogBatchState":
        lo, hi = math.log2(feasible[0]), math.log2(feasible[-1])
        x = min(hi, max(lo, math.log2(batch)))
        return cls(x, lo, hi, x)

    def project(self, x: float) -> float:
        return min(self.x_hi, max(self.x_lo, x))

    def move_to(self, x: float) -> None:
        self.x_prev = self.x
        self.x = self.project(x)
