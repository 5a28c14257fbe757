"""End-to-end experiment orchestration.

For each holdout replicate: split, fit (or load) the baseline model on the
train rows, index the train rows with their own predictions, debias the
holdout queries for every k in the grid, and score fairness/utility against
the raw holdout predictions of the same model. Replicates run concurrently
with per-replicate seeds; all outputs are deterministic functions of the
config, and exports are byte-stable across runs.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, SplitPlan, load_csv, load_schema, split
from .debias import build_index
from .exceptions import DataError, TowerDebiasError
from .metrics import FairnessReport, fairness_report
from .models import (FitConfig, FittedPredictor, fit_knn_predictor, fit_linear,
                     fit_logistic, load_external_predictions)
from .theory import GaussianSpec, sample_dataset

DEFAULT_K_GRID = (1, 2, 5, 7, 10, 15, 20, 25, 30, 40, 50)

_UTILITY_FIELDS = ("utility_baseline", "utility_debiased")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; serializable to/from the experiment JSON."""

    data: str
    schema: str
    model: str = "linear"            # "linear" | "logistic" | "knn" | "external"
    task: str | None = None          # inferred for linear/logistic when omitted
    external_predictions: str | None = None
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    holdout_fraction: float = 0.2
    replicates: int = 25
    seed: int = 0
    threshold: float = 0.5
    drop_missing: bool = False
    fit: FitConfig = field(default_factory=FitConfig)
    output_dir: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.model not in ("linear", "logistic", "knn", "external"):
            raise ValueError(f"unknown model kind {self.model!r}")
        if not self.k_grid:
            raise ValueError("k_grid must be nonempty")
        if list(self.k_grid) != sorted(self.k_grid) or len(set(self.k_grid)) != len(self.k_grid):
            raise ValueError("k_grid must be strictly ascending")
        if min(self.k_grid) < 1:
            raise ValueError("every k must be >= 1")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be inside (0, 1)")
        if self.model == "external" and not self.external_predictions:
            raise ValueError("model 'external' requires external_predictions")
        if self.task is not None and self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.model == "linear" and self.task == "classification":
            raise ValueError("the linear model is a regression model")
        if self.model == "logistic" and self.task == "regression":
            raise ValueError("the logistic model is a classification model")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        fit = FitConfig(**doc.pop("fit", {}))
        known = {f for f in cls.__dataclass_fields__ if f != "fit"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        if "k_grid" in doc:
            doc["k_grid"] = tuple(int(k) for k in doc["k_grid"])
        return cls(fit=fit, **doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError:
            raise DataError(f"experiment config not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"experiment config is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        """JSON form; ``threads`` is omitted because it never affects results."""
        return {
            "data": self.data, "schema": self.schema, "model": self.model,
            "task": self.task, "external_predictions": self.external_predictions,
            "k_grid": list(self.k_grid), "holdout_fraction": self.holdout_fraction,
            "replicates": self.replicates, "seed": self.seed,
            "threshold": self.threshold, "drop_missing": self.drop_missing,
            "output_dir": self.output_dir,
            "fit": {"ridge_epsilon": self.fit.ridge_epsilon,
                    "logistic_max_iter": self.fit.logistic_max_iter,
                    "logistic_tol": self.fit.logistic_tol,
                    "knn_k": self.fit.knn_k},
        }


@dataclass(frozen=True)
class SweepCell:
    k: int
    replicate: int
    report: FairnessReport


@dataclass(frozen=True)
class SweepResult:
    config: ExperimentConfig
    task: str
    cells: tuple[SweepCell, ...]  # ordered by (k, replicate)

    def rows(self) -> list[dict]:
        """Long-format rows: one (k, replicate, sensitive_level, metric, value) each."""
        out = []
        for cell in self.cells:
            for entry in cell.report.entries:
                d = entry.to_dict()
                for metric in ("baseline_correlation", "debiased_correlation", "reduction"):
                    out.append({"k": cell.k, "replicate": cell.replicate,
                                "sensitive_level": entry.name, "metric": metric,
                                "value": d[metric]})
                for metric, signed in (("abs_baseline_correlation", entry.baseline),
                                       ("abs_debiased_correlation", entry.debiased)):
                    out.append({"k": cell.k, "replicate": cell.replicate,
                                "sensitive_level": entry.name, "metric": metric,
                                "value": None if signed is None else abs(signed)})
            for metric in _UTILITY_FIELDS:
                out.append({"k": cell.k, "replicate": cell.replicate,
                            "sensitive_level": "", "metric": metric,
                            "value": getattr(cell.report, metric)})
        return out

    def summary(self) -> list[dict]:
        """Per-(k, level, metric) mean and sample sd across replicates.

        Undefined correlations are excluded; ``n_defined`` counts what remains.
        """
        groups: dict[tuple, list[float]] = {}
        counts: dict[tuple, int] = {}
        for row in self.rows():
            key = (row["k"], row["sensitive_level"], row["metric"])
            counts[key] = counts.get(key, 0) + 1
            if row["value"] is not None:
                groups.setdefault(key, []).append(row["value"])
        out = []
        for key in sorted(counts, key=lambda t: (t[0], t[1], t[2])):
            vals = groups.get(key, [])
            mean = float(np.mean(vals)) if vals else None
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
            out.append({"k": key[0], "sensitive_level": key[1], "metric": key[2],
                        "mean": mean, "sd": sd, "n_defined": len(vals)})
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "task": self.task,
            "cells": [{"k": c.k, "replicate": c.replicate, "report": c.report.to_dict()}
                      for c in self.cells],
            "summary": self.summary(),
        }


def _fit_baseline(train: Dataset, config: ExperimentConfig,
                  external: FittedPredictor | None) -> FittedPredictor:
    if config.model == "external":
        return external
    if config.model == "linear":
        return fit_linear(train, config.fit)
    if config.model == "logistic":
        return fit_logistic(train, config.fit)
    return fit_knn_predictor(train, config.fit, task=config.task or "auto")


def _resolve_task(config: ExperimentConfig, ds: Dataset) -> str:
    if config.task:
        return config.task
    if config.model == "linear":
        return "regression"
    if config.model == "logistic":
        return "classification"
    return "classification" if ds.binary_target else "regression"


def run_experiment(config: ExperimentConfig) -> SweepResult:
    """Run the full repeated-holdout sweep described by ``config``."""
    schema = load_schema(config.schema)
    ds = load_csv(config.data, schema, drop_missing=config.drop_missing)
    task = _resolve_task(config, ds)
    if task == "classification" and not ds.binary_target:
        raise DataError("classification task requires a binary (0/1) target")
    external = None
    if config.model == "external":
        external = load_external_predictions(config.external_predictions, task=task)
    plan = SplitPlan(holdout_fraction=config.holdout_fraction,
                     n_replicates=config.replicates, base_seed=config.seed)

    def one_replicate(r: int) -> list[SweepCell]:
        try:
            train, holdout = split(ds, plan, r)
            overlap = np.intersect1d(train.row_ids, holdout.row_ids)
            if overlap.size:
                raise TowerDebiasError(f"split leaked {overlap.size} rows into both sides")
            model = _fit_baseline(train, config, external)
            reference_preds = model.predict(train)
            baseline_preds = model.predict(holdout)
            index = build_index(train, reference_preds)
            debiased_by_k = index.sweep_predict(holdout, config.k_grid)
            return [
                SweepCell(k=k, replicate=r, report=fairness_report(
                    holdout, baseline_preds, debiased_by_k[k], k=k, task=task,
                    threshold=config.threshold))
                for k in config.k_grid
            ]
        except TowerDebiasError as exc:
            raise type(exc)(f"replicate {r}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        per_replicate = list(pool.map(one_replicate, range(config.replicates)))

    cells = [cell for cells in per_replicate for cell in cells]
    cells.sort(key=lambda c: (c.k, c.replicate))
    return SweepResult(config=config, task=task, cells=tuple(cells))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def export_results(result: SweepResult, out_dir) -> dict[str, Path]:
    """Write sweep.csv (long), summary.csv (per-k aggregates) and report.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    paths = {
        "sweep": out / "sweep.csv",
        "summary": out / "summary.csv",
        "report": out / "report.json",
    }
    with open(paths["sweep"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,replicate,sensitive_level,metric,value\n")
        for row in result.rows():
            fh.write(f'{row["k"]},{row["replicate"]},{row["sensitive_level"]},'
                     f'{row["metric"]},{_fmt(row["value"])}\n')
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,sensitive_level,metric,mean,sd,n_defined\n")
        for row in result.summary():
            fh.write(f'{row["k"]},{row["sensitive_level"]},{row["metric"]},'
                     f'{_fmt(row["mean"])},{_fmt(row["sd"])},{row["n_defined"]}\n')
    with open(paths["report"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(result.to_dict()))
    return paths


def write_synthetic(spec: GaussianSpec, n: int, seed: int, data_path, schema_path) -> Dataset:
    """Emit a sampled CSV plus matching schema JSON; returns the sampled Dataset."""
    ds = sample_dataset(spec, n, seed)
    with open(data_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(ds.names) + "\n")
        for row in ds.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    schema = {name: role.value for name, role in zip(ds.names, ds.roles)}
    with open(schema_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(schema, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return ds


__all__ = [
    "DEFAULT_K_GRID", "ExperimentConfig", "SweepCell", "SweepResult",
    "run_experiment", "export_results", "write_synthetic", "canonical_json",
]
