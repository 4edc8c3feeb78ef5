"""Command line entry point: one subcommand per pipeline stage.

Stages communicate through files inside the output directory::

    extract   corpus/*.json          -> observations.csv, extraction_report.json
    clean     observations.csv       -> cleaned.csv, clean_errors.csv
    fuse      cleaned.csv            -> bills.csv, pods.csv, users.csv, quarantine.csv [tables.sql]
    features  bills/pods/users.csv   -> features.csv, encodings.json, feature_ledger.csv
    correlate features.csv           -> correlations.csv
    train     features.csv           -> model.json
    evaluate  features.csv           -> metrics.json
    synth     synth config           -> bills/, truth/, synth.json, mapping.csv
    pipeline  all of the above, in order (synth excluded)

Every invocation also writes ``report.json``. Exit status: 0 ok, 1 invalid
input or configuration, 2 fatal I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from billprep._csv import write_rows
from billprep import clean as clean_mod
from billprep import extract as extract_mod
from billprep import fuse as fuse_mod
from billprep.analytics import evaluation, features, forest, logistic, stats
from billprep.mapping import MappingError, MonthLocale, parse_mapping_file
from billprep.synthgen import SynthConfig, generate_corpus

log = logging.getLogger("billprep")

STAGES = ("extract", "clean", "fuse", "features", "correlate", "train", "evaluate")
ANALYTICS_STAGES = ("train", "evaluate")


class ConfigError(ValueError):
    """Invalid configuration or missing inputs (exit status 1)."""


class UsageError(ConfigError):
    pass


@dataclass
class PipelineConfig:
    corpus: Optional[str] = None
    mapping: Optional[str] = None
    out: str = "out"
    salt: str = ""
    locale: str = "english"
    workers: int = 1
    seed: Optional[int] = None
    model: str = "forest"
    k_folds: int = 5
    stratified: bool = True
    undersample_ratio: Optional[float] = None
    forest: dict = field(default_factory=dict)
    logistic: dict = field(default_factory=dict)
    feature_columns: dict = field(default_factory=dict)
    sql_dump: bool = False
    stages: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def stage_enabled(self, stage: str) -> bool:
        return bool(self.stages.get(stage, True))

    def forest_params(self) -> forest.ForestParams:
        params = {"seed": self.seed, **self.forest}
        try:
            return forest.ForestParams(**params)
        except TypeError as exc:
            raise ConfigError(f"bad forest parameters: {exc}") from None

    def logistic_params(self) -> logistic.LogisticParams:
        params = {"seed": self.seed, **self.logistic}
        try:
            return logistic.LogisticParams(**params)
        except TypeError as exc:
            raise ConfigError(f"bad logistic parameters: {exc}") from None

    def model_params(self):
        if self.model == "forest":
            return self.forest_params()
        if self.model == "logistic":
            return self.logistic_params()
        if self.model == "majority":
            return None
        raise ConfigError(f"unknown model {self.model!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline configuration")
    common.add_argument("--workers", type=int, help="worker count (outputs do not depend on it)")
    common.add_argument("--seed", type=int, help="master seed for sampling and models")
    common.add_argument("--salt", help="salt for hashed_text fields")
    common.add_argument("--locale", choices=[m.value for m in MonthLocale], help="month-name locale")
    common.add_argument("--sql-dump", action="store_true", default=None, help="also write tables.sql")
    common.add_argument("--out", help="output (working) directory")
    common.add_argument("--corpus", help="root folder of JSON bills")
    common.add_argument("--mapping", help="mapping file (name;paths;output_type;entity;role)")
    common.add_argument("--model", choices=evaluation.MODEL_KINDS, help="classifier for train/evaluate")
    common.add_argument("--undersample", type=float, dest="undersample_ratio",
                        help="majority:minority ratio for training folds")
    common.add_argument("--synth-config", help="synthetic corpus configuration (synth subcommand)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="billprep", description="Billing data preparation pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in (*STAGES, "synth", "pipeline"):
        sub.add_parser(name, parents=[common])
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for name in ("workers", "seed", "salt", "locale", "sql_dump", "out", "corpus", "mapping", "model",
                 "undersample_ratio"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if cfg.workers < 1:
        raise ConfigError("--workers must be >= 1")
    try:
        MonthLocale(cfg.locale)
    except ValueError:
        raise ConfigError(f"unknown locale {cfg.locale!r}") from None
    return cfg


# -- outputs -----------------------------------------------------------------------


class StageOutputs:
    """Outputs are written as ``<name>.partial`` and renamed once the stage succeeds."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.pending: list[Path] = []

    def path(self, name: str) -> Path:
        final = self.out_dir / name
        self.pending.append(final)
        return final.with_name(final.name + ".partial")

    def commit(self) -> None:
        for final in self.pending:
            os.replace(final.with_name(final.name + ".partial"), final)
        self.pending.clear()


@contextmanager
def stage_outputs(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = StageOutputs(out_dir)
    yield outputs
    outputs.commit()


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} given")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _require_input(out: Path, name: str, stage: str) -> Path:
    p = out / name
    if not p.exists():
        raise ConfigError(f"{stage}: missing input {p} (run the previous stage first)")
    return p


def _load_mapping(cfg: PipelineConfig):
    path = _require(cfg.mapping, "mapping file")
    try:
        return parse_mapping_file(path.read_text(encoding="utf-8"), cfg.locale)
    except MappingError as exc:
        raise ConfigError(f"mapping file {path}: {exc}") from None


def _dump_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- stages ------------------------------------------------------------------------


def stage_extract(cfg: PipelineConfig) -> dict:
    spec = _load_mapping(cfg)
    root = _require(cfg.corpus, "corpus root")
    out = Path(cfg.out)
    observations, report = extract_mod.extract_corpus(root, spec, workers=cfg.workers)
    with stage_outputs(out) as o:
        extract_mod.write_observations(o.path("observations.csv"), observations)
        _dump_json(o.path("extraction_report.json"), report.to_dict())
    return {"observations": len(observations), **report.to_dict()}


def stage_clean(cfg: PipelineConfig) -> dict:
    spec = _load_mapping(cfg)
    out = Path(cfg.out)
    observations = extract_mod.read_observations(_require_input(out, "observations.csv", "clean"))
    rows, errors = clean_mod.clean_observations(observations, spec, cfg.salt, workers=cfg.workers)
    with stage_outputs(out) as o:
        clean_mod.write_cleaned(o.path("cleaned.csv"), rows)
        clean_mod.write_errors(o.path("clean_errors.csv"), errors)
    return {"values": len(rows), "errors": len(errors)}


def stage_fuse(cfg: PipelineConfig) -> dict:
    spec = _load_mapping(cfg)
    out = Path(cfg.out)
    cleaned = clean_mod.read_cleaned(_require_input(out, "cleaned.csv", "fuse"))
    tables, quarantine, wide = fuse_mod.fuse(cleaned, spec, workers=cfg.workers)
    with stage_outputs(out) as o:
        for name in ("bills", "pods", "users"):
            fuse_mod.write_table(o.path(f"{name}.csv"), tables, name)
        fuse_mod.write_quarantine(o.path("quarantine.csv"), quarantine)
        if cfg.sql_dump:
            o.path("tables.sql").write_text(fuse_mod.sql_dump(tables, spec), encoding="utf-8")
    return {
        "bills": len(tables.bills),
        "pods": len(tables.pods),
        "users": len(tables.users),
        "quarantine": len(quarantine),
        "normalized_cells": tables.cell_count(),
        "denormalized_cells": fuse_mod.wide_cell_count(wide, spec),
    }


def stage_features(cfg: PipelineConfig) -> dict:
    spec = _load_mapping(cfg)
    out = Path(cfg.out)
    for name in ("bills.csv", "pods.csv", "users.csv"):
        _require_input(out, name, "features")
    tables = fuse_mod.read_tables(out, spec)
    try:
        columns = features.FeatureColumns(**cfg.feature_columns)
    except TypeError as exc:
        raise ConfigError(f"bad feature_columns: {exc}") from None
    vectors, encodings, ledger = features.build_feature_vectors(tables, spec, columns)
    with stage_outputs(out) as o:
        features.write_features(o.path("features.csv"), vectors)
        o.path("encodings.json").write_text(features.encodings_to_json(encodings), encoding="utf-8")
        write_rows(o.path("feature_ledger.csv"), ("key", "reason"), ledger)
    positives = sum(v.churn for v in vectors)
    return {"vectors": len(vectors), "positives": positives, "excluded": len(ledger)}


def _load_vectors(out: Path, stage: str):
    vectors = features.read_features(_require_input(out, "features.csv", stage))
    if not vectors:
        raise ConfigError(f"{stage}: features.csv holds no vectors")
    return vectors


def stage_correlate(cfg: PipelineConfig) -> dict:
    out = Path(cfg.out)
    vectors = _load_vectors(out, "correlate")
    X, y = features.feature_matrix(vectors)
    report = stats.correlation_report({n: X[:, j] for j, n in enumerate(features.FEATURE_NAMES)}, y)
    with stage_outputs(out) as o:
        write_rows(o.path("correlations.csv"), ("feature", "r"),
                   ((name, "undefined" if r is None else repr(r)) for name, r in report))
    return {"correlations": {name: r for name, r in report}}


def _require_seed(cfg: PipelineConfig, stage: str) -> None:
    if cfg.seed is None:
        raise ConfigError(f"{stage}: a seed is required (--seed or config 'seed')")


def stage_train(cfg: PipelineConfig) -> dict:
    _require_seed(cfg, "train")
    out = Path(cfg.out)
    X, y = features.feature_matrix(_load_vectors(out, "train"))
    params = cfg.model_params()
    model = evaluation.make_model(cfg.model, params)
    try:
        if cfg.model == "forest":
            model.fit(X, y, workers=cfg.workers, feature_names=list(features.FEATURE_NAMES))
        else:
            model.fit(X, y)
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None
    if cfg.model == "majority":
        payload = {"kind": "majority", "label": model.label}
    else:
        payload = model.to_dict()
    with stage_outputs(out) as o:
        o.path("model.json").write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    train_metrics = evaluation.evaluate_predictions(y, model.predict(X))
    return {"model": cfg.model, "training_accuracy": train_metrics.accuracy, "samples": len(y)}


def stage_evaluate(cfg: PipelineConfig) -> dict:
    _require_seed(cfg, "evaluate")
    out = Path(cfg.out)
    X, y = features.feature_matrix(_load_vectors(out, "evaluate"))
    try:
        metrics = evaluation.cross_validate(
            X, y, model=cfg.model, params=cfg.model_params(), k=cfg.k_folds,
            stratified=cfg.stratified, seed=cfg.seed, undersample_ratio=cfg.undersample_ratio,
            workers=cfg.workers,
        )
    except ValueError as exc:
        raise ConfigError(f"evaluate: {exc}") from None
    payload = {
        "model": cfg.model,
        "k_folds": cfg.k_folds,
        "stratified": cfg.stratified,
        "undersample_ratio": cfg.undersample_ratio,
        "seed": cfg.seed,
        "pooled": metrics.to_dict(),
    }
    with stage_outputs(out) as o:
        _dump_json(o.path("metrics.json"), payload)
    return {"accuracy": metrics.accuracy, "recall_churn": metrics.recall(1)}


def stage_synth(cfg: PipelineConfig, synth_config: Optional[str]) -> dict:
    data = dict(cfg.synth)
    if synth_config:
        try:
            data.update(json.loads(_require(synth_config, "synth config").read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"synth config is not valid JSON: {exc}") from None
    if cfg.seed is not None:
        data["seed"] = cfg.seed
    try:
        sc = SynthConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    truth = generate_corpus(sc, cfg.out)
    return {
        "bills": truth.n_bills,
        "pods": len(truth.tables.pods),
        "users": len(truth.tables.users),
        "vectors": len(truth.vectors),
        "positives": sum(v.churn for v in truth.vectors),
        "malformed_files": truth.n_malformed,
    }


STAGE_FUNCS = {
    "extract": stage_extract,
    "clean": stage_clean,
    "fuse": stage_fuse,
    "features": stage_features,
    "correlate": stage_correlate,
    "train": stage_train,
    "evaluate": stage_evaluate,
}


def _write_report(out: Path, report: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "report.json", report)


def run(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    report: dict[str, Any] = {"command": argv[0] if argv else None, "status": "error", "stages": {}}
    out: Optional[Path] = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        cfg = load_config(args)
        out = Path(cfg.out)
        report["command"] = args.command
        if args.command == "synth":
            stages = ["synth"]
        elif args.command == "pipeline":
            stages = [s for s in STAGES if cfg.stage_enabled(s)]
            # check every referenced input before any work starts
            _load_mapping(cfg)
            _require(cfg.corpus, "corpus root")
            if any(s in stages for s in ANALYTICS_STAGES):
                _require_seed(cfg, "pipeline")
        else:
            stages = [args.command]
        for stage in stages:
            started = time.perf_counter()
            if stage == "synth":
                result = stage_synth(cfg, args.synth_config)
            else:
                result = STAGE_FUNCS[stage](cfg)
            result["seconds"] = round(time.perf_counter() - started, 3)
            report["stages"][stage] = result
            log.info("%s: %s", stage, result)
        report["status"] = "ok"
        return 0
    except (ConfigError, MappingError, fuse_mod.IntegrityError, logistic.ConvergenceError) as exc:
        report["error"] = str(exc)
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        report["error"] = f"{type(exc).__name__}: {exc}"
        print(report["error"], file=sys.stderr)
        return 2
    finally:
        if out is not None:
            try:
                _write_report(out, report)
            except OSError:
                pass


def main() -> None:
    sys.exit(run())
