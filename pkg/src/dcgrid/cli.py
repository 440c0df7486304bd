"""Command-line front end: ``dcgrid run | build-library | evaluate | power-range``.

Each subcommand reads an optional JSON config (``--config``) and lets every
key be overridden with ``--key value``. Precedence is flag > environment
(``DCGRID_SEED`` for the master seed) > config file > built-in default.
Errors go to stderr as one JSON object; exit codes are 0 ok, 2 config,
3 numerical divergence, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from dcgrid.clock import CadenceError
from dcgrid.commands import RoutingError
from dcgrid.controllers import CONTROLLERS, ControllerConfigError, make_controller
from dcgrid.datacenter import SpecError, TraceError, load_spec, match_peak_replicas, power_curve_rows
from dcgrid.datacenter.power_range import feasible_power_range_w
from dcgrid.grid import FeederError, PowerFlowDivergence, load_feeder
from dcgrid.hashing import config_hash
from dcgrid.scenario import (
    EvaluationError,
    SamplingConfig,
    ScenarioLibrary,
    ScreeningConfig,
    build_library,
    canonical_scenario,
    default_workers,
    empty_scenario,
    evaluate_controllers,
    format_table,
    rows_to_csv,
    sample_scenario,
    summarize,
)
from dcgrid.controllers.ofo import OFOParams
from dcgrid.sim import run_episode, write_episode
from dcgrid.system import SystemConfig, load_system

SEED_ENV = "DCGRID_SEED"

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _json_obj(text: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def _opt_int(text: str) -> Optional[int]:
    return None if str(text).lower() in ("none", "null", "") else int(text)


# (key, flag type, default, help); defaults that are callables are resolved lazily
COMMON = [
    ("system", str, None, "system JSON (feeder + datacenters); bundled 13-bus system if omitted"),
    ("feeder", str, None, "feeder JSON replacing the system's feeder"),
    ("models", str, None, "comma-separated model spec JSONs replacing specs with the same label"),
    ("seed", int, 0, f"master seed (env {SEED_ENV} overrides the config file)"),
    ("base_dt", str, "0.1", "base time step in seconds, exact decimal or fraction"),
    ("stochastic_itl", _bool, False, "sample ITL noise instead of using fit means"),
]
OPTIONS: dict[str, list] = {
    "run": COMMON + [
        ("controller", str, "ofo", "controller name: " + ", ".join(CONTROLLERS)),
        ("params", _json_obj, {}, "controller parameters as a JSON object"),
        ("scenario", str, "canonical", "canonical | quiet | seed:N | library:PATH:INDEX"),
        ("duration_s", float, 3600.0, "episode length in seconds"),
        ("sampling", _json_obj, {}, "sampling config used by seed:N scenarios"),
        ("out", str, "out", "output directory"),
    ],
    "build-library": COMMON + [
        ("n_candidates", int, 50, "number of seeds to screen"),
        ("seed_start", int, 0, "first candidate seed"),
        ("tag", str, "test", "library tag, e.g. train or test"),
        ("sampling", _json_obj, {}, "sampling config overrides"),
        ("screening", _json_obj, {}, "screening thresholds and OFO params"),
        ("workers", int, default_workers, "parallel screening workers"),
        ("out", str, "library.json", "output library file"),
    ],
    "evaluate": COMMON + [
        ("library", str, None, "library.json to evaluate on"),
        ("controllers", str, "none,droop,ofo", "comma-separated controller names"),
        ("controller_params", _json_obj, {}, "per-controller parameter objects keyed by name"),
        ("n_scenarios", _opt_int, None, "first N accepted scenarios (default all)"),
        ("repeats", int, 1, "repeats per (controller, scenario)"),
        ("workers", int, default_workers, "parallel episode workers"),
        ("out", str, "eval", "output directory for eval.csv and eval_summary.json"),
    ],
    "power-range": [
        ("spec", str, None, "model spec JSON"),
        ("target_peak_w", float, None, "datacenter peak power to match, watts"),
        ("out", str, None, "optional output directory for power_range.csv and power_range.json"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcgrid", description="Datacenter-grid co-simulation tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its keys")
        for key, typ, _, help_text in options:
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=help_text)
    return parser


def resolve_config(command: str, args: argparse.Namespace, environ=os.environ) -> dict:
    """Merge defaults, config file, environment seed and flags into one plain dict."""
    options = OPTIONS[command]
    known = {key for key, *_ in options}
    file_cfg: dict = {}
    if args.config:
        with open(args.config) as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, _, default, _ in options:
        cfg[key] = default() if callable(default) else default
        if key in file_cfg:
            cfg[key] = file_cfg[key]
    if "seed" in known and environ.get(SEED_ENV) not in (None, ""):
        try:
            cfg["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


# neither changes any result, so both stay out of stored configs and hashes
_UNHASHED = ("out", "workers")


def _stored(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in _UNHASHED}


def _base_dt(cfg: dict) -> Fraction:
    try:
        dt = Fraction(str(cfg["base_dt"]))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"base_dt must be a decimal or fraction, got {cfg['base_dt']!r}") from None
    if dt <= 0:
        raise ConfigError("base_dt must be positive")
    return dt


def _system(cfg: dict) -> SystemConfig:
    system = load_system(cfg.get("system"))
    if cfg.get("feeder"):
        system = SystemConfig(load_feeder(cfg["feeder"]), system.datacenters, system.source)
    if cfg.get("models"):
        paths = [p for p in str(cfg["models"]).split(",") if p]
        specs = {s.label: s for s in (load_spec(p) for p in paths)}
        missing = sorted(set(specs) - set(system.specs()))
        if missing:
            raise ConfigError(f"model specs not deployed in the system: {', '.join(missing)}")
        system = system.with_specs(specs)
    return system


def _controller_params(name: str, params: dict, system: SystemConfig) -> dict:
    params = dict(params)
    if name == "tap" and "regulator" not in params:
        if not system.feeder.regulators:
            raise ConfigError("the tap controller needs a feeder with a regulator")
        params["regulator"] = system.feeder.regulators[0].id
    return params


def _scenario(spec: str, cfg: dict, horizon: float):
    if spec == "canonical":
        return canonical_scenario(horizon)
    if spec == "quiet":
        return empty_scenario(horizon)
    if spec.startswith("seed:"):
        sampling = SamplingConfig.from_dict({**cfg.get("sampling", {}), "horizon_s": horizon})
        return sample_scenario(int(spec[5:]), sampling)
    if spec.startswith("library:"):
        path, _, index = spec[len("library:"):].rpartition(":")
        scenarios = ScenarioLibrary.load(path).accepted_scenarios()
        i = int(index)
        if not 0 <= i < len(scenarios):
            raise ConfigError(f"library {path} has {len(scenarios)} accepted scenarios, index {i} is out of range")
        return scenarios[i]
    raise ConfigError(f"unknown scenario {spec!r}; use canonical, quiet, seed:N or library:PATH:INDEX")


def cmd_run(cfg: dict) -> int:
    if cfg["duration_s"] <= 0:
        raise ConfigError("duration_s must be positive")
    system = _system(cfg)
    name = cfg["controller"]
    controller = make_controller(name, _controller_params(name, cfg["params"], system))
    scenario = _scenario(cfg["scenario"], cfg, cfg["duration_s"])
    log = run_episode(system.feeder, system.datacenters, controller, scenario, cfg["duration_s"],
                      _base_dt(cfg), seed=cfg["seed"], stochastic_itl=cfg["stochastic_itl"])
    summary = write_episode(log, cfg["out"], {
        "controller": name,
        "scenario_id": scenario.scenario_id,
        "config": _stored(cfg),
        "config_hash": config_hash(_stored(cfg)),
        "system_hash": config_hash(system.source),
    })
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_build_library(cfg: dict) -> int:
    system = _system(cfg)
    screening_doc = dict(cfg["screening"])
    ofo = OFOParams(**screening_doc.pop("ofo", {}))
    screening_doc.pop("base_dt", None)  # the top-level base_dt governs both
    screening = ScreeningConfig(ofo=ofo, base_dt=_base_dt(cfg), **screening_doc)
    sampling = SamplingConfig.from_dict(cfg["sampling"])
    library = build_library(cfg["n_candidates"], cfg["seed_start"], cfg["tag"], system.feeder,
                            system.datacenters, sampling, screening, workers=max(1, cfg["workers"]),
                            system_config=system.source)
    library.config["cli"] = _stored(cfg)
    out = Path(cfg["out"])
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    library.save(out)
    print(json.dumps({"library": str(out), "config_hash": config_hash(library.config),
                      "summary": library.summary()}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    if not cfg["library"]:
        raise ConfigError("evaluate needs --library")
    system = _system(cfg)
    library = ScenarioLibrary.load(cfg["library"])
    names = [c for c in str(cfg["controllers"]).split(",") if c]
    if not names:
        raise ConfigError("no controllers given")
    extra = cfg["controller_params"]
    controllers = [(n, n, _controller_params(n, extra.get(n, {}), system)) for n in names]
    rows = evaluate_controllers(library.accepted_scenarios(), controllers, system.feeder, system.datacenters,
                                n_scenarios=cfg["n_scenarios"], repeats=cfg["repeats"], base_dt=_base_dt(cfg),
                                stochastic_itl=cfg["stochastic_itl"], workers=max(1, cfg["workers"]),
                                seed=cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(rows_to_csv(rows))
    table = summarize(rows)
    resolved = _stored(cfg)
    doc = {"config": resolved, "config_hash": config_hash(resolved), "library_hash": config_hash(library.config),
           "summary": {c: {m: {"mean": mean, "std": std} for m, (mean, std) in cols.items()}
                       for c, cols in table.items()}}
    (out / "eval_summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(format_table(table))
    return EXIT_OK


def cmd_power_range(cfg: dict) -> int:
    if not cfg["spec"] or cfg["target_peak_w"] is None:
        raise ConfigError("power-range needs --spec and --target-peak-w")
    spec = load_spec(cfg["spec"])
    replicas = match_peak_replicas(spec, cfg["target_peak_w"])
    rows = power_curve_rows(spec, replicas)
    span = feasible_power_range_w(spec, replicas).span_w
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    print(f"config_hash: {config_hash(_stored(cfg))}")
    print(f"replicas: {replicas}")
    print(buf.getvalue(), end="")
    print(f"span_mw: {span / 1e6:.6g}")
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "power_range.csv").write_text(buf.getvalue())
        doc = {"config": _stored(cfg), "config_hash": config_hash(_stored(cfg)), "replicas": replicas, "span_w": span,
               "model": spec.label}
        (out / "power_range.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS: dict[str, Callable[[dict], int]] = {
    "run": cmd_run,
    "build-library": cmd_build_library,
    "evaluate": cmd_evaluate,
    "power-range": cmd_power_range,
}

# checked in order, so subclasses must precede their bases
ERROR_CODES = [
    (PowerFlowDivergence, "grid.divergence", EXIT_DIVERGENCE),
    (ControllerConfigError, "controllers.config", EXIT_CONFIG),
    (FeederError, "grid.feeder", EXIT_CONFIG),
    (SpecError, "datacenter.spec", EXIT_CONFIG),
    (TraceError, "datacenter.trace", EXIT_CONFIG),
    (CadenceError, "sim.cadence", EXIT_CONFIG),
    (RoutingError, "sim.routing", EXIT_CONFIG),
    (EvaluationError, "scenario.evaluation", EXIT_CONFIG),
    (ConfigError, "cli.config", EXIT_CONFIG),
    (OSError, "cli.io", EXIT_IO),
    (json.JSONDecodeError, "cli.config", EXIT_CONFIG),
    (KeyError, "cli.config", EXIT_CONFIG),
    (TypeError, "cli.config", EXIT_CONFIG),
    (ValueError, "cli.config", EXIT_CONFIG),
]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except tuple(cls for cls, _, _ in ERROR_CODES) as exc:
        code, status = next((c, s) for cls, c, s in ERROR_CODES if isinstance(exc, cls))
        message = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        err = {"error": code, "message": message, "exit_code": status}
        if isinstance(exc, ControllerConfigError):
            err["valid_controllers"] = list(CONTROLLERS)
        print(json.dumps(err), file=sys.stderr)
        return status


if __name__ == "__main__":
    sys.exit(main())
