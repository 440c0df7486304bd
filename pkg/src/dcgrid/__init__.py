"""Co-simulation of batch-size-controllable AI datacenters on radial distribution feeders."""

from dcgrid.clock import ComponentSchedule, SimulationClock
from dcgrid.commands import Command, SetBatchSize, SetReplicas, SetTaps
from dcgrid.sim import DatacenterConfig, EpisodeLog, run_episode

__version__ = "0.1.0"

__all__ = [
    "Command",
    "ComponentSchedule",
    "DatacenterConfig",
    "EpisodeLog",
    "SetBatchSize",
    "SetReplicas",
    "SetTaps",
    "SimulationClock",
    "run_episode",
]
