"""Command-line front end.

Commands::

    mcselect simulate     write train/cal/test CSVs and the task's region file
    mcselect select       run a selection method on CSV data
    mcselect train-score  fit a learned score on a calibration CSV
    mcselect benchmark    Monte Carlo FDR/power table
    mcselect sweep        the same table over a grid of nominal levels

Every option can also come from ``--config FILE`` (``key=value`` lines, ``#``
comments); flags win over the file.  Keys are the long flag names with the
leading dashes dropped and dashes kept, e.g. ``q=0.2``, ``score.big_m=1e6``,
``learn.epochs=50``.  The seed falls back to the ``MCS_SEED`` environment
variable, then to 0.

Exit codes: 0 success, 2 malformed CSV, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import bench
from .baselines import BaselineSpec, bi_select, cs_ib, cs_int, cs_is
from .conformal import LabeledDataset, UnlabeledDataset, mcs_select
from .csvio import CsvFormatError, format_float, read_dataset, write_dataset
from .learn import (
    FAMILIES,
    LearnedScore,
    TrainConfig,
    load_score_model,
    save_score_model,
    train_score,
    uses_prediction,
)
from .predictors import fit_knn, fit_ridge, load_model, save_model
from .regions import format_region_spec, parse_region_spec
from .scores import DistanceScore
from .simulate import SimConfig, gen_dataset

__all__ = ["main", "ConfigError", "load_config"]

log = logging.getLogger("mcselect")

EXIT_CSV = 2
EXIT_CONFIG = 3
SELECT_METHODS = ("mcs_dist", "mcs_learn", "cs_int", "cs_ib", "cs_is", "bi")
SCORE_MODEL_FILE = "score_model.txt"
PREDICTOR_FILE = "predictor.txt"
CAL_PRIME_FILE = "cal_prime.csv"
TRAIN_LOG_FILE = "training_log.csv"


class ConfigError(ValueError):
    """Invalid or missing configuration (exit code 3)."""


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class Option:
    key: str
    type: Callable[[str], Any]
    default: Any
    help: str
    commands: tuple[str, ...]


SIM = ("simulate", "benchmark", "sweep")
FIT = ("select", "train-score", "benchmark", "sweep")
LEARN = ("train-score", "benchmark", "sweep")
ALL = ("simulate", "select", "train-score", "benchmark", "sweep")

OPTIONS = [
    Option("seed", int, None, "master seed (default: $MCS_SEED, else 0)", ALL),
    Option("setting", int, 1, "data-generating setting 1-6", SIM),
    Option("task", int, 1, "selection task 1-4", SIM),
    Option("d", int, 10, "response dimension", SIM),
    Option("p", int, 10, "covariate dimension", SIM),
    Option("n-train", int, 500, "training block size", SIM),
    Option("n-cal", int, 500, "calibration block size", SIM),
    Option("m", int, 100, "test block size", SIM),
    Option("out-dir", str, None, "output directory", ("simulate", "train-score")),
    Option("train", str, None, "training CSV for fitting the predictor", ("select", "train-score")),
    Option("cal", str, None, "calibration CSV (needs y columns)", ("select", "train-score")),
    Option("test", str, None, "test CSV (y columns optional, ignored)", ("select",)),
    Option("region", str, None, "region spec file", ("select", "train-score")),
    Option("method", str, "mcs_dist", "one of " + ", ".join(SELECT_METHODS), ("select",)),
    Option("methods", _name_list, ("mcs_dist", "cs_ib", "bi"), "comma-separated methods",
           ("benchmark", "sweep")),
    Option("q", float, 0.3, "nominal FDR level in (0, 1)", ("select", "train-score", "benchmark")),
    Option("q-grid", _float_list, tuple(np.round(np.arange(0.05, 0.501, 0.05), 2)),
           "comma-separated nominal levels", ("sweep",)),
    Option("reps", int, 200, "trials per configuration", ("benchmark", "sweep")),
    Option("jobs", int, 1, "worker processes", ("benchmark", "sweep")),
    Option("out", str, None, "output CSV (default: stdout for tables)",
           ("select", "benchmark", "sweep")),
    Option("score.kind", str, "clipped", "distance score: clipped or regular", ("select",)),
    Option("score.big_m", float, 1e6, "clipping constant M", FIT),
    Option("score.norm", float, 2.0, "distance norm: 1, 2 or inf", ("select",)),
    Option("predictor", str, "ridge", "ridge or knn", FIT),
    Option("predictor.lambda", float, 1e-3, "ridge penalty", FIT),
    Option("predictor.k", int, 10, "k-NN neighbours", FIT),
    Option("predictor-model", str, None, "saved predictor file", ("select", "train-score")),
    Option("score-model", str, None, "saved learned-score file (mcs_learn)", ("select",)),
    Option("baseline.holdout_fraction", float, 0.5, "cs_is holdout share", ("select", "benchmark", "sweep")),
    Option("baseline.n_levels", int, 20, "cs_is level-grid size", ("select", "benchmark", "sweep")),
    Option("learn.epochs", int, 200, "training epochs", LEARN),
    Option("learn.lr", float, 1e-2, "learning rate", LEARN),
    Option("learn.momentum", float, 0.9, "momentum", LEARN),
    Option("learn.tau", float, 0.01, "L1 temperature", LEARN),
    Option("learn.gamma", float, 0.5, "L2 balancing weight", LEARN),
    Option("learn.loss", str, "L2", "L1 or L2", ("train-score",)),
    Option("learn.K", int, 100, "validation splits per epoch", LEARN),
    Option("learn.epsilon", float, 0.1, "soft-rank regularization", LEARN),
    Option("learn.hidden", int, 64, "hidden width", LEARN),
    Option("learn.family", str, "covariate_and_prediction", "one of " + ", ".join(FAMILIES), LEARN),
]
_BY_KEY = {o.key: o for o in OPTIONS}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcselect", description="Multivariate conformal selection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ALL:
        sp = sub.add_parser(command)
        sp.add_argument("--config", help="key=value configuration file")
        for opt in OPTIONS:
            if command in opt.commands:
                # Defaults are applied after the config file is merged.
                sp.add_argument(f"--{opt.key}", dest=opt.key, type=opt.type, default=None,
                                help=f"{opt.help} (default: {opt.default})")
    return parser


def load_config(path) -> dict[str, str]:
    """Parse a ``key=value`` file; unknown keys are a configuration error."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _BY_KEY:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then config file, then flags."""
    values = {o.key: o.default for o in OPTIONS if command in o.commands}
    if args.config:
        for key, raw in load_config(args.config).items():
            if key not in values:
                continue  # belongs to another command
            try:
                values[key] = _BY_KEY[key].type(raw)
            except ValueError:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    for key in values:
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    if values.get("seed") is None:
        env = os.environ.get("MCS_SEED")
        try:
            values["seed"] = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"MCS_SEED is not an integer: {env!r}") from None
    if "q" in values and not 0 < values["q"] < 1:
        raise ConfigError(f"q must lie in (0, 1), got {values['q']}")
    return values


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None:
            raise ConfigError(f"missing required option --{key}")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file: {path}")
    return p


def _region(cfg):
    try:
        return parse_region_spec(_existing(cfg["region"]).read_text(encoding="utf-8"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{cfg['region']}: {exc}") from None


def _method_options(cfg) -> bench.MethodOptions:
    try:
        return bench.MethodOptions(
            predictor=cfg["predictor"],
            ridge_lambda=cfg["predictor.lambda"],
            knn_k=cfg["predictor.k"],
            big_m=cfg["score.big_m"],
            learn=_train_config(cfg, cfg.get("q", 0.3)) if "learn.epochs" in cfg else TrainConfig(),
            baseline=BaselineSpec(
                holdout_fraction=cfg.get("baseline.holdout_fraction", 0.5),
                n_levels=cfg.get("baseline.n_levels", 20),
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg, q) -> TrainConfig:
    try:
        return TrainConfig(
            epochs=cfg["learn.epochs"], lr=cfg["learn.lr"], momentum=cfg["learn.momentum"],
            tau=cfg["learn.tau"], gamma=cfg["learn.gamma"], loss=cfg.get("learn.loss", "L2"),
            K=cfg["learn.K"], q=q, epsilon=cfg["learn.epsilon"], hidden=cfg["learn.hidden"],
            family=cfg["learn.family"], big_m=cfg["score.big_m"], seed=cfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _predictor(cfg, p: int, d: int):
    if cfg.get("predictor-model"):
        try:
            model = load_model(_existing(cfg["predictor-model"]))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{cfg['predictor-model']}: {exc}") from None
        return model, False
    if not cfg.get("train"):
        raise ConfigError("this method needs a predictor: pass --train or --predictor-model")
    x, y = read_dataset(_existing(cfg["train"]), need_y=True, p=p, d=d)
    if cfg["predictor"] == "knn":
        return fit_knn(x, y, cfg["predictor.k"]), True
    if cfg["predictor"] != "ridge":
        raise ConfigError(f"unknown predictor {cfg['predictor']!r}")
    return fit_ridge(x, y, cfg["predictor.lambda"]), True


def cmd_simulate(cfg) -> int:
    _require(cfg, "out-dir")
    try:
        sim = SimConfig(cfg["setting"], cfg["task"], cfg["d"], cfg["p"],
                        cfg["n-train"], cfg["n-cal"], cfg["m"], cfg["seed"])
        region = sim.region()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg["out-dir"])
    out.mkdir(parents=True, exist_ok=True)
    for name, block in zip(("train", "cal", "test"), gen_dataset(sim)):
        write_dataset(out / f"{name}.csv", block.x, block.y)
    (out / "region.txt").write_text(format_region_spec(region), encoding="utf-8")
    print(f"wrote train.csv cal.csv test.csv region.txt to {out}")
    return 0


def cmd_select(cfg) -> int:
    _require(cfg, "cal", "test", "region", "out")
    method = cfg["method"]
    if method not in SELECT_METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(SELECT_METHODS)}")
    region = _region(cfg)
    d = region.dim
    cx, cy = read_dataset(_existing(cfg["cal"]), need_y=True, d=d)
    p = cx.shape[1]
    tx, _ = read_dataset(_existing(cfg["test"]), p=p)
    if tx.shape[0] == 0:
        raise ConfigError("test file has no rows")
    cal, test = LabeledDataset(cx, cy), UnlabeledDataset(tx)
    rng = np.random.default_rng(cfg["seed"])
    big_m = cfg["score.big_m"]
    try:
        if method == "bi":
            spec = BaselineSpec("bi", big_m=big_m)
            result = bi_select(cal, test, region, cfg["q"], rng, spec)
        elif method == "mcs_learn":
            _require(cfg, "score-model")
            try:
                model = load_score_model(_existing(cfg["score-model"]))
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{cfg['score-model']}: {exc}") from None
            pred = _predictor(cfg, p, d)[0] if uses_prediction(model.family) else None
            result = mcs_select(cal, test, region, LearnedScore(model, region, pred), cfg["q"], rng)
        else:
            pred = _predictor(cfg, p, d)[0]
            if method == "mcs_dist":
                score = DistanceScore(region, pred, cfg["score.kind"], big_m, cfg["score.norm"])
                result = mcs_select(cal, test, region, score, cfg["q"], rng)
            elif method == "cs_is":
                spec = BaselineSpec("cs_is", cfg["baseline.holdout_fraction"],
                                    cfg["baseline.n_levels"], big_m=big_m)
                result = cs_is(cal, test, region, pred, cfg["q"], spec, rng)
            else:
                fn = cs_int if method == "cs_int" else cs_ib
                result = fn(cal, test, region, pred, cfg["q"], rng, big_m)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    chosen = np.zeros(len(test), dtype=int)
    chosen[result.selected] = 1
    out = Path(cfg["out"])
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["test_row_index", "p_value", "selected"])
        for j in range(len(test)):
            writer.writerow([j, format_float(result.p_values[j]), chosen[j]])
    print(f"selected={result.n_selected} k_star={result.k_star} "
          f"threshold={format_float(result.threshold)}")
    return 0


def cmd_train_score(cfg) -> int:
    _require(cfg, "cal", "region", "out-dir")
    region = _region(cfg)
    x, y = read_dataset(_existing(cfg["cal"]), need_y=True, d=region.dim)
    if x.shape[0] < 10:
        raise ConfigError("train-score needs at least 10 calibration rows")
    config = _train_config(cfg, cfg["q"])
    predictor, fitted = (None, False)
    if uses_prediction(config.family):
        predictor, fitted = _predictor(cfg, x.shape[1], region.dim)
    data = LabeledDataset(x, y)
    i_train, i_val, i_cal = bench.split_for_learning(len(data), np.random.default_rng(cfg["seed"]))
    try:
        model = train_score(data.subset(i_train), data.subset(i_val), region, predictor, config)
    except FloatingPointError as exc:
        log.error("%s", exc)
        return 1
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg["out-dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_score_model(model, out / SCORE_MODEL_FILE)
    if fitted:
        save_model(predictor, out / PREDICTOR_FILE)
    cal_prime = data.subset(np.sort(i_cal))
    write_dataset(out / CAL_PRIME_FILE, cal_prime.x, cal_prime.y)
    with (out / TRAIN_LOG_FILE).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "mean_validation_power"])
        for t, (loss, power) in enumerate(zip(model.log.loss, model.log.val_power), 1):
            writer.writerow([t, format_float(loss), format_float(power)])
    print(f"split={len(i_train)}/{len(i_val)}/{len(i_cal)} best_epoch={model.log.best_epoch} "
          f"val_power={format_float(model.log.val_power[model.log.best_epoch - 1])}")
    return 0


def _sim_config(cfg) -> SimConfig:
    try:
        sim = SimConfig(cfg["setting"], cfg["task"], cfg["d"], cfg["p"],
                        cfg["n-train"], cfg["n-cal"], cfg["m"], cfg["seed"])
        sim.region()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return sim


def _check_methods(methods):
    known = set(bench.METHODS) | {bench.ORACLE}
    bad = [m for m in methods if m not in known]
    if bad or not methods:
        raise ConfigError(f"unknown methods {bad}; choose from {sorted(known)}")


def _emit(cfg, text: str) -> None:
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_benchmark(cfg) -> int:
    _check_methods(cfg["methods"])
    if cfg["reps"] < 1 or cfg["jobs"] < 1:
        raise ConfigError("reps and jobs must be positive")
    summary = bench.run_benchmark(_sim_config(cfg), cfg["methods"], cfg["q"], cfg["reps"],
                                  cfg["jobs"], _method_options(cfg))
    _emit(cfg, summary.to_csv())
    return 0


def cmd_sweep(cfg) -> int:
    _check_methods(cfg["methods"])
    grid = cfg["q-grid"]
    if not grid or any(not 0 < q < 1 for q in grid):
        raise ConfigError("q-grid must be a nonempty list of levels in (0, 1)")
    if cfg["reps"] < 1 or cfg["jobs"] < 1:
        raise ConfigError("reps and jobs must be positive")
    options = _method_options(cfg)
    tables = bench.sweep_nominal_levels(_sim_config(cfg), cfg["methods"], grid, cfg["reps"],
                                        cfg["jobs"], options)
    header, *rest = tables[0].to_csv().splitlines(keepends=True)
    body = [line for t in tables for line in t.to_csv().splitlines(keepends=True)[1:]]
    _emit(cfg, header + "".join(body))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "select": cmd_select,
    "train-score": cmd_train_score,
    "benchmark": cmd_benchmark,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except CsvFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CSV
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def run() -> None:
    sys.exit(main())
