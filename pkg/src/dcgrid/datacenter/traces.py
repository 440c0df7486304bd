"""Replay of measured per-replica power traces (``trace.csv`` + ``itl_fit.json``)."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dcgrid.datacenter.fits import LogisticFit

TRACE_COLUMNS = ("batch_size", "relative_time_s", "power_w")


class TraceError(ValueError):
    pass


@dataclass
class _Trace:
    times: np.ndarray
    power: np.ndarray
    period: float

    def at(self, t: float) -> float:
        if self.period > 0:
            t = t % self.period
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.power[max(i, 0)])


@dataclass
class TraceStore:
    traces: dict[tuple[str, int], _Trace] = field(default_factory=dict)
    itl_fits: dict[str, LogisticFit] = field(default_factory=dict)

    def add_trace(self, label: str, batch: int, rows) -> None:
        rows = sorted((float(t), float(p)) for t, p in rows)
        if not rows:
            raise TraceError(f"empty trace for ({label}, {batch})")
        times = np.array([r[0] for r in rows])
        if times[0] != 0.0:
            raise TraceError(f"trace ({label}, {batch}) must start at relative time 0")
        # the last sample is held for as long as the spacing before it
        period = float(times[-1] + (times[-1] - times[-2])) if len(times) > 1 else 0.0
        self.traces[(label, int(batch))] = _Trace(times, np.array([r[1] for r in rows]), period)

    def has(self, label: str, batch: int) -> bool:
        return (label, int(batch)) in self.traces

    def labels(self) -> set[str]:
        return {k[0] for k in self.traces}

    def merge(self, other: "TraceStore") -> "TraceStore":
        self.traces.update(other.traces)
        self.itl_fits.update(other.itl_fits)
        return self


def trace_power_w(store: TraceStore, label: str, batch: int, t: float) -> float:
    """Hold-previous, cyclic replay of the trace for ``(label, batch)`` at time ``t``."""
    try:
        trace = store.traces[(label, int(batch))]
    except KeyError:
        raise TraceError(f"no trace for model {label!r} at batch {batch}") from None
    return trace.at(t)


def load_trace_store(path, label: str | None = None) -> TraceStore:
    """Load ``trace.csv`` (and ``itl_fit.json`` if present) for one model.

    ``path`` is either the CSV file or a directory containing it. The model
    label defaults to ``spec.json``'s label in the same directory, else the
    directory name.
    """
    path = Path(path)
    directory = path if path.is_dir() else path.parent
    csv_path = path / "trace.csv" if path.is_dir() else path
    if label is None:
        spec_path = directory / "spec.json"
        label = json.loads(spec_path.read_text())["label"] if spec_path.exists() else directory.name

    rows: dict[int, list] = defaultdict(list)
    try:
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != TRACE_COLUMNS:
                raise TraceError(f"{csv_path}: expected header {','.join(TRACE_COLUMNS)}")
            for n, row in enumerate(reader, start=2):
                try:
                    rows[int(row["batch_size"])].append((float(row["relative_time_s"]), float(row["power_w"])))
                except (TypeError, ValueError):
                    raise TraceError(f"{csv_path}:{n}: malformed row {row}") from None
    except OSError as exc:
        raise TraceError(f"cannot read {csv_path}: {exc}") from exc
    if not rows:
        raise TraceError(f"{csv_path}: no trace rows")

    store = TraceStore()
    for batch, r in rows.items():
        store.add_trace(label, batch, r)
    itl_path = directory / "itl_fit.json"
    if itl_path.exists():
        store.itl_fits[label] = LogisticFit.from_dict(json.loads(itl_path.read_text()))
    return store
