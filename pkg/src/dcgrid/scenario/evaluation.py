"""Head-to-head controller evaluation over a scenario library."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from dcgrid.controllers import make_controller
from dcgrid.grid.feeder import FeederModel
from dcgrid.metrics import METRIC_COLUMNS
from dcgrid.scenario.model import Scenario
from dcgrid.sim import DatacenterConfig, run_episode

EVAL_COLUMNS = ("controller", "scenario_id", "repeat") + METRIC_COLUMNS


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRow:
    controller: str
    scenario_id: str
    repeat: int
    metrics: dict

    def values(self) -> list:
        return [self.controller, self.scenario_id, self.repeat] + [self.metrics[c] for c in METRIC_COLUMNS]


def _controller_spec(entry) -> tuple[str, str, dict]:
    """Accepts ``"ofo"`` or ``("label", "ofo", {params})``."""
    if isinstance(entry, str):
        return entry, entry, {}
    label, name, params = entry
    return label, name, dict(params or {})


def _run_one(feeder, datacenters, name, params, scenario, repeat, base_dt, stochastic_itl, master_seed):
    ctrl = make_controller(name, params)
    seed = master_seed + (scenario.seed or 0) * 1000 + repeat
    log = run_episode(feeder, datacenters, ctrl, scenario, scenario.horizon_s, base_dt, seed=seed,
                      stochastic_itl=stochastic_itl)
    return log.metrics().to_dict()


def evaluate_controllers(scenarios: Sequence[Scenario], controllers: Sequence, feeder: FeederModel,
                         datacenters: Sequence[DatacenterConfig], n_scenarios: Optional[int] = None,
                         repeats: int = 1, base_dt=Fraction(1, 10), stochastic_itl: bool = False,
                         workers: int = 1, seed: int = 0) -> list[EvalRow]:
    """Rows ordered by controller, then scenario, then repeat, independent of ``workers``.

    Repeat ``r`` of a scenario with seed ``s`` runs with episode seed
    ``seed + 1000 * s + r``; deterministic controllers with fixed ITL therefore
    repeat exactly.
    """
    n = len(scenarios) if n_scenarios is None else n_scenarios
    if n > len(scenarios):
        raise EvaluationError(f"asked for {n} scenarios but the library holds {len(scenarios)}")
    if repeats < 1:
        raise EvaluationError("repeats must be >= 1")
    specs = [_controller_spec(c) for c in controllers]
    for label, name, params in specs:
        make_controller(name, params)  # fail fast on bad names before running anything
    jobs = [(label, name, params, scen, r) for label, name, params in specs for scen in scenarios[:n]
            for r in range(repeats)]
    if workers > 1 and len(jobs) > 1:
        metrics = Parallel(n_jobs=workers)(
            delayed(_run_one)(feeder, datacenters, name, params, scen, r, base_dt, stochastic_itl, seed)
            for _, name, params, scen, r in jobs)
    else:
        metrics = [_run_one(feeder, datacenters, name, params, scen, r, base_dt, stochastic_itl, seed)
                   for _, name, params, scen, r in jobs]
    return [EvalRow(label, scen.scenario_id, r, m) for (label, _, _, scen, r), m in zip(jobs, metrics)]


def rows_to_csv(rows: Sequence[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row.values()])
    return buf.getvalue()


def summarize(rows: Sequence[EvalRow]) -> dict[str, dict[str, tuple[float, float]]]:
    """Per controller and metric: (mean, std) over repeats of the across-scenario mean.

    The spread therefore reflects run-to-run randomness only and is exactly
    zero for deterministic controllers with fixed ITL.
    """
    out: dict[str, dict[str, tuple[float, float]]] = {}
    for label in dict.fromkeys(r.controller for r in rows):
        mine = [r for r in rows if r.controller == label]
        repeats = sorted({r.repeat for r in mine})
        out[label] = {}
        for col in METRIC_COLUMNS:
            per_repeat = np.array([np.mean([r.metrics[col] for r in mine if r.repeat == k]) for k in repeats])
            out[label][col] = (float(per_repeat.mean()), float(per_repeat.std()))
    return out


def format_table(summary: Mapping[str, Mapping[str, tuple[float, float]]]) -> str:
    header = ["controller", *METRIC_COLUMNS]
    lines = ["\t".join(header)]
    for label, cols in summary.items():
        cells = [label]
        for col in METRIC_COLUMNS:
            mean, std = cols[col]
            cells.append(f"{mean:.4g}" if std == 0 else f"{mean:.4g} ± {std:.2g}")
        lines.append("\t".join(cells))
    return "\n".join(lines)
