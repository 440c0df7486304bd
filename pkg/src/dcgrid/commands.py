"""Typed control actions routed by the simulation loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union


class RoutingError(RuntimeError):
    """A command targets an unknown component or one that cannot accept it."""


@dataclass(frozen=True)
class SetBatchSize:
    batch_sizes: Mapping[str, int]
    target: str

    kind = "set_batch_size"


@dataclass(frozen=True)
class SetReplicas:
    replicas: Mapping[str, int]
    target: str

    kind = "set_replicas"


@dataclass(frozen=True)
class SetTaps:
    """Regulator tap ratios; a float applies to every phase of the regulator."""

    taps: Mapping[str, Union[float, Sequence[float]]]
    target: str = "grid"

    kind = "set_taps"


Command = Union[SetBatchSize, SetReplicas, SetTaps]

DATACENTER_COMMANDS = (SetBatchSize, SetReplicas)
GRID_COMMANDS = (SetTaps,)


def payload(command: Command) -> dict:
    if isinstance(command, SetBatchSize):
        return {"batch_sizes": dict(command.batch_sizes)}
    if isinstance(command, SetReplicas):
        return {"replicas": dict(command.replicas)}
    return {"taps": {k: (list(v) if not isinstance(v, (int, float)) else v) for k, v in command.taps.items()}}
