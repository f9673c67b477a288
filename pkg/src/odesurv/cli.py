"""Command-line surface: simulate, train, evaluate, predict, risk-split.

Every command is a pure function of its configuration, input files and seed,
so re-running produces byte-identical outputs. Options come from an optional
JSON config file (--config) with individual flags taking precedence. Exit
codes: 0 on success, 2 for configuration problems, 3 for numerical failures;
errors are printed to stderr as one JSON object. Set the ODESURV_LOG
environment variable (DEBUG/INFO/WARNING/ERROR) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from .errors import (
    ConfigError,
    ConvergenceError,
    DataLoadError,
    DivergenceError,
    OdesurvError,
    UndefinedMetricError,
)
from .models import ModelSpec, load_model, predict_curves_many, save_model
from .odeint import OdeConfig
from .training import TrainConfig, fit

__all__ = ["RunConfig", "run", "export_curves", "main"]

log = logging.getLogger("odesurv")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("simulate", "train", "evaluate", "predict", "risk-split")


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str
    data: str | None = None
    model_path: str | None = None
    out: str | None = None
    n: int = 1000
    seed: int = 0
    levels: tuple = metrics_mod.DEFAULT_LEVELS
    grid: object = 100  # point count or explicit list of times
    split: object = None  # ratio list or None for "use the whole file"
    model_spec: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: OdeConfig = field(default_factory=OdeConfig)


def _require(config: RunConfig, attr: str, flag: str):
    if getattr(config, attr) is None:
        raise ConfigError(f"{config.command} requires {flag}")
    return getattr(config, attr)


def _write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_grid(grid, dataset) -> np.ndarray:
    if isinstance(grid, (int, np.integer)):
        if grid < 0:
            raise ConfigError(f"grid point count must be >= 0, got {grid}")
        if grid == 0:
            return np.empty(0)
        t_max = float(np.max(dataset.times)) if dataset.n else 1.0
        return np.linspace(0.0, t_max, int(grid))
    times = np.asarray(list(grid), dtype=float)
    if times.size and (np.any(times < 0.0) or np.any(np.diff(times) < 0.0)):
        raise ConfigError("explicit grid times must be nonnegative and nondecreasing")
    return times


def export_curves(model, dataset, grid, out_path, solver: OdeConfig | None = None) -> None:
    """Write long-format (id, t, survival, hazard) rows for every individual.

    An empty grid produces a header-only file. Values are exactly the ones
    ``predict_survival`` / ``predict_hazard`` would return on the same grid.
    """
    grid = np.asarray(grid, dtype=float)
    if solver is None:
        solver = OdeConfig()
    try:
        fh = open(out_path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {out_path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "t", "survival", "hazard"])
        if grid.size == 0 or dataset.n == 0:
            return
        surv, haz = predict_curves_many(model, dataset.features, grid, solver)
        for i in range(dataset.n):
            for k in range(grid.shape[0]):
                writer.writerow(
                    [i, repr(float(grid[k])), repr(float(surv[i, k])), repr(float(haz[i, k]))]
                )


def _split_parts(config: RunConfig, dataset):
    if config.split is None:
        return None
    return data_mod.split(dataset, ratios=config.split, seed=config.seed)


def _cmd_simulate(config: RunConfig) -> None:
    out = _require(config, "out", "--out")
    dataset = data_mod.simulate_crossing(config.n, config.seed)
    data_mod.save_csv(dataset, out)
    log.info("wrote %d simulated rows to %s", dataset.n, out)


def _cmd_train(config: RunConfig) -> int:
    data_path = _require(config, "data", "--data")
    out = Path(_require(config, "out", "--out"))
    dataset = data_mod.load_csv(data_path)
    ratios = config.split if config.split is not None else (3, 1, 1)
    if len(ratios) < 2:
        raise ConfigError("training needs a split with at least train and validation parts")
    parts = data_mod.split(dataset, ratios=ratios, seed=config.seed)
    train_cfg = config.train
    model, history = fit(config.model_spec, parts[0], parts[1], train_cfg)
    save_model(model, out)
    history_path = out.with_name(out.stem + "_history.json")
    _write_json(history.to_dict(), history_path)
    log.info("model -> %s, history -> %s (stop: %s)", out, history_path, history.stop_reason)
    if history.stop_reason == "diverged":
        raise DivergenceError("training diverged; model and partial history were written")
    return EXIT_OK


def _cmd_evaluate(config: RunConfig) -> None:
    data_path = _require(config, "data", "--data")
    model_path = _require(config, "model_path", "--model")
    out = _require(config, "out", "--out")
    dataset = data_mod.load_csv(data_path)
    parts = _split_parts(config, dataset)
    if parts is not None:
        dataset = parts[-1]
    model = load_model(model_path)
    report = metrics_mod.evaluate(model, dataset, levels=config.levels, config=config.solver)
    _write_json(report.to_dict(), out)
    log.info("metrics -> %s", out)


def _cmd_predict(config: RunConfig) -> None:
    data_path = _require(config, "data", "--data")
    model_path = _require(config, "model_path", "--model")
    out = _require(config, "out", "--out")
    dataset = data_mod.load_csv(data_path)
    model = load_model(model_path)
    grid = _resolve_grid(config.grid, dataset)
    export_curves(model, dataset, grid, out, solver=config.solver)
    log.info("curves -> %s", out)


def _cmd_risk_split(config: RunConfig) -> None:
    data_path = _require(config, "data", "--data")
    model_path = _require(config, "model_path", "--model")
    out = Path(_require(config, "out", "--out"))
    dataset = data_mod.load_csv(data_path)
    parts = _split_parts(config, dataset)
    if parts is not None:
        dataset = parts[-1]
    model = load_model(model_path)
    groups = metrics_mod.risk_split(model, dataset, config.solver)

    labels = np.zeros(dataset.n, dtype=int)
    labels[groups.high_risk] = 1
    chi_square, p_value = metrics_mod.logrank_test(dataset.times, dataset.events, labels)
    _write_json(
        {
            "threshold_time": groups.threshold_time,
            "n_high_risk": int(groups.high_risk.size),
            "n_low_risk": int(groups.low_risk.size),
            "logrank_chi_square": chi_square,
            "logrank_p_value": p_value,
        },
        out,
    )

    km_path = out.with_name(out.stem + "_km.csv")
    with open(km_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "t", "survival"])
        for name, idx in (("high_risk", groups.high_risk), ("low_risk", groups.low_risk)):
            curve = metrics_mod.km_survival(dataset.times[idx], dataset.events[idx])
            for t, s in zip(curve.times, curve.values):
                writer.writerow([name, repr(float(t)), repr(float(s))])
    log.info("log-rank -> %s, KM curves -> %s", out, km_path)


def run(config: RunConfig) -> int:
    """Execute one resolved command; returns the process exit status."""
    if config.command == "simulate":
        _cmd_simulate(config)
    elif config.command == "train":
        return _cmd_train(config)
    elif config.command == "evaluate":
        _cmd_evaluate(config)
    elif config.command == "predict":
        _cmd_predict(config)
    elif config.command == "risk-split":
        _cmd_risk_split(config)
    else:
        raise ConfigError(f"unknown command {config.command!r}")
    return EXIT_OK


def _parse_levels(text: str):
    levels = tuple(float(v) for v in text.split(","))
    if not levels or any(not 0.0 < v <= 1.0 for v in levels):
        raise ConfigError(f"levels must lie in (0, 1], got {text!r}")
    return levels


def _parse_grid(text: str):
    if "," not in text:
        try:
            return int(text)
        except ValueError:
            return [float(text)]
    return [float(v) for v in text.split(",")]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odesurv",
        description="Continuous-time survival modeling with ODE hazard networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="JSON config file; flags override its values")
        cmd.add_argument("--data", help="input dataset CSV")
        cmd.add_argument("--model", dest="model_path", help="model JSON file")
        cmd.add_argument("--out", help="output path")
        cmd.add_argument("--n", type=int, help="number of rows to simulate")
        cmd.add_argument("--seed", type=int, help="seed for simulation/splits/training")
        cmd.add_argument("--levels", help="comma-separated truncation levels, e.g. 1e-8,0.2,0.4")
        cmd.add_argument("--grid", help="prediction grid: a point count or comma-separated times")
    return parser


def _config_from_sources(args: argparse.Namespace) -> RunConfig:
    payload = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config file must contain a JSON object")

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return payload.get(key, default)

    levels = payload.get("levels", list(metrics_mod.DEFAULT_LEVELS))
    if args.levels is not None:
        levels = _parse_levels(args.levels)
    else:
        levels = tuple(float(v) for v in levels)
        if any(not 0.0 < v <= 1.0 for v in levels):
            raise ConfigError(f"levels must lie in (0, 1], got {levels}")

    grid = payload.get("grid", 100)
    if args.grid is not None:
        grid = _parse_grid(args.grid)

    seed = int(pick(args.seed, "seed", 0))
    try:
        solver = OdeConfig(**payload.get("solver", {}))
        train_payload = dict(payload.get("train", {}))
        train_payload.setdefault("seed", seed)
        if "solver" not in train_payload:
            train_payload["solver"] = solver
        else:
            train_payload["solver"] = OdeConfig(**train_payload["solver"])
        train = TrainConfig(**train_payload)
        model_payload = payload.get("model", {})
        model_spec = ModelSpec(
            variant=model_payload.get("variant", "full"),
            hidden_dims=tuple(model_payload.get("hidden_dims", (32, 32))),
        )
    except TypeError as exc:
        raise ConfigError(f"invalid config key: {exc}") from exc

    return RunConfig(
        command=args.command,
        data=pick(args.data, "data", None),
        model_path=pick(args.model_path, "model", None),
        out=pick(args.out, "out", None),
        n=int(pick(args.n, "n", 1000)),
        seed=seed,
        levels=levels,
        grid=grid,
        split=payload.get("split", (3, 1, 1) if args.command == "train" else None),
        model_spec=model_spec,
        train=train,
        solver=solver,
    )


def _error_payload(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ODESURV_LOG", "WARNING").upper())
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        config = _config_from_sources(args)
        return run(config)
    except (ConfigError, DataLoadError, ValueError) as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ConvergenceError, UndefinedMetricError) as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_NUMERICAL
    except OdesurvError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
