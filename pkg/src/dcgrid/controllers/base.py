from __future__ import annotations

from abc import ABC, abstractmethod
from fractions import Fraction
from typing import TYPE_CHECKING, Mapping

from dcgrid.clock import as_fraction

if TYPE_CHECKING:
    from dcgrid.clock import SimulationClock
    from dcgrid.commands import Command
    from dcgrid.datacenter.backend import Datacenter
    from dcgrid.events import EventLog
    from dcgrid.grid.backend import Grid


class Controller(ABC):
    """Closed-loop policy stepped by the simulation loop at ``dt_s``.

    ``step`` reads the most recent datacenter and grid states through the
    component handles and returns typed commands; it must not mutate the
    components directly.
    """

    name = "controller"

    def __init__(self, dt=1) -> None:
        self._dt = as_fraction(dt)

    @property
    def dt_s(self) -> Fraction:
        return self._dt

    def reset(self) -> None:
        pass

    @abstractmethod
    def step(self, clock: "SimulationClock", datacenters: Mapping[str, "Datacenter"], grid: "Grid",
             events: "EventLog") -> list["Command"]:
        ...


class NoCoordination(Controller):
    """Baseline that never acts; deployments keep their initial batch size."""

    name = "none"

    def step(self, clock, datacenters, grid, events):
        return []


def no_coordination_step() -> list:
    return []
