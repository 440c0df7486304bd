"""Exact-rational tick bookkeeping for the multi-rate loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational


class CadenceError(ValueError):
    """A component cadence is not a positive integer multiple of the base tick."""


def as_fraction(value) -> Fraction:
    """Convert seconds to an exact :class:`Fraction`.

    Floats go through their shortest decimal repr so ``0.1`` becomes ``1/10``
    rather than the binary approximation.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value))


@dataclass
class SimulationClock:
    base_dt: Fraction
    tick: int = 0

    def __post_init__(self) -> None:
        self.base_dt = as_fraction(self.base_dt)
        if self.base_dt <= 0:
            raise CadenceError(f"base_dt must be positive, got {self.base_dt}")

    @property
    def time(self) -> Fraction:
        return self.tick * self.base_dt

    @property
    def time_s(self) -> float:
        return float(self.time)

    def advance(self) -> None:
        self.tick += 1

    def ticks_for(self, dt) -> int:
        """Number of base ticks in ``dt``; raises if not commensurate."""
        dt = as_fraction(dt)
        if dt <= 0:
            raise CadenceError(f"cadence must be positive, got {dt}")
        ratio = dt / self.base_dt
        if ratio.denominator != 1:
            raise CadenceError(f"cadence {dt} s is not a multiple of base tick {self.base_dt} s")
        return ratio.numerator


@dataclass
class ComponentSchedule:
    """Integer-tick cadence of one component; ``next_due`` is always a multiple of ``native_dt``."""

    component_id: str
    native_dt: Fraction
    base_dt: Fraction
    steps: int = 0
    next_due_tick: int = 0

    def __post_init__(self) -> None:
        self.native_dt = as_fraction(self.native_dt)
        self.base_dt = as_fraction(self.base_dt)
        if self.native_dt <= 0:
            raise CadenceError(f"{self.component_id}: native_dt must be positive, got {self.native_dt}")
        ratio = self.native_dt / self.base_dt
        if ratio.denominator != 1:
            raise CadenceError(
                f"{self.component_id}: cadence {self.native_dt} s is not a multiple of base tick {self.base_dt} s")
        self.period_ticks = ratio.numerator

    @property
    def next_due(self) -> Fraction:
        return self.next_due_tick * self.base_dt

    def due(self, tick: int) -> bool:
        return tick >= self.next_due_tick

    def mark_stepped(self) -> None:
        self.steps += 1
        self.next_due_tick += self.period_ticks


def expected_steps(duration, native_dt) -> int:
    """Closed-form step count: once at t = 0, then at every multiple of dt <= duration."""
    return int(as_fraction(duration) // as_fraction(native_dt)) + 1
