from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class EventRecord:
    time_s: float
    source: str
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"time_s": self.time_s, "source": self.source, "kind": self.kind, "payload": self.payload},
            sort_keys=True,
        )


class EventLog:
    """Append-only event stream shared by every component in an episode."""

    def __init__(self) -> None:
        self.records: list[EventRecord] = []

    def emit(self, time_s: float, source: str, kind: str, **payload: Any) -> None:
        if self.records and time_s < self.records[-1].time_s:
            raise ValueError(f"event at t={time_s} precedes last event at t={self.records[-1].time_s}")
        self.records.append(EventRecord(float(time_s), source, kind, payload))

    def of_kind(self, kind: str) -> list[EventRecord]:
        return [r for r in self.records if r.kind == kind]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)
