"""Hyperparameter sweeps: enumerate, sample, run, rank, persist."""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .constant import DEFAULT_SORT_KEY, MODEL_STATEPRED, MODEL_TRAJPRED, SORT_KEYS, validate_model_kind
from .core import ParseError, UnknownHyperparameter, UnknownSortKey
from .StatePred import StatePred, StatePredConfig
from .TrajPred import TrajPred, TrajPredConfig
from .utils import tools

logger = logging.getLogger(__name__)

MODEL_CLASSES = {
    MODEL_STATEPRED: (StatePred, StatePredConfig),
    MODEL_TRAJPRED: (TrajPred, TrajPredConfig),
}

LIST_FIELDS = ("encoder_hidden_layers", "decoder_hidden_layers")

STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"


@dataclass
class SearchResultRow:
    """Outcome of one configuration."""

    config_id: int
    config: dict
    status: str
    metrics: dict = field(default_factory=dict)
    runtime_s: float = 0.0
    error: str = ""

    def sort_value(self, sort_key):
        value = self.metrics.get(sort_key, float("nan"))
        return float("nan") if value is None else float(value)

    def as_record(self, field_names):
        record = {"config_id": self.config_id, "status": self.status}
        for name in field_names:
            value = self.config.get(name)
            record[name] = json.dumps(list(value) if isinstance(value, tuple) else value)
        for key in SORT_KEYS:
            record[key] = self.metrics.get(key, float("nan"))
        record["runtime_s"] = self.runtime_s
        record["error"] = self.error
        return record


def result_columns(kind):
    _, config_cls = MODEL_CLASSES[validate_model_kind(kind)]
    return ["config_id", "status", *config_cls.field_names(), *SORT_KEYS, "runtime_s", "error"]


def _options(name, value):
    """Candidate values of one hyperparameter."""
    if name in LIST_FIELDS:
        if isinstance(value, (list, tuple)) and value and all(item is None or isinstance(item, (list, tuple)) for item in value):
            return [None if item is None else tuple(item) for item in value]
        return [None if value is None else tuple(value)]
    if isinstance(value, (list, tuple)):
        if not value:
            raise ValueError(f"hyperparameter {name!r} has an empty option list.")
        return list(value)
    return [value]


def enumerate_configs(opts, kind=MODEL_STATEPRED):
    """Cartesian product of the options, keys in sorted order.

    A list value is a set of candidates; for the list-typed layer fields only
    a list of lists is, a flat list being one candidate.

    Raises
    ------
    UnknownHyperparameter
        If an option is not a field of the model's config.
    """
    _, config_cls = MODEL_CLASSES[validate_model_kind(kind)]
    unknown = sorted(set(opts) - set(config_cls.field_names()))
    if unknown:
        raise UnknownHyperparameter(f"{config_cls.__name__} has no hyperparameters {unknown}.")
    keys = sorted(opts)
    grids = [_options(key, opts[key]) for key in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*grids)]


def sample_runs(configs, numruns, seed=0):
    """``(config_id, config)`` pairs: all configs, or a seeded sample of ``numruns``.

    Sampled configs keep their enumeration order.
    """
    if isinstance(numruns, bool) or not isinstance(numruns, (int, np.integer)) or numruns < 1:
        raise ValueError(f"numruns must be a positive integer; got {numruns!r}.")
    indexed = list(enumerate(configs))
    if numruns >= len(indexed):
        return indexed
    chosen = np.random.default_rng(seed).choice(len(indexed), size=numruns, replace=False)
    return [indexed[k] for k in sorted(int(k) for k in chosen)]


def _run_one(kind, dataset, config_id, hyperparams, master_seed):
    model_cls, config_cls = MODEL_CLASSES[kind]
    params = dict(hyperparams)
    params.setdefault("seed", tools.derive_seed(master_seed, config_id))
    start = time.perf_counter()
    try:
        config = config_cls.from_dict(params)
        resolved = config.to_dict()
        model = model_cls(dataset, config)
        stats = model.train_net()
    except Exception as exc:
        return SearchResultRow(
            config_id=config_id,
            config=params,
            status=STATUS_FAILED,
            runtime_s=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )
    return SearchResultRow(
        config_id=config_id,
        config=resolved,
        status=STATUS_COMPLETED,
        metrics=stats.summary(),
        runtime_s=time.perf_counter() - start,
    )


def rank_rows(rows, sort_key=DEFAULT_SORT_KEY):
    """Completed rows ascending in ``sort_key`` (NaN last), ties by config id."""
    if sort_key not in SORT_KEYS:
        raise UnknownSortKey(f"sort_key must be one of {list(SORT_KEYS)}; got {sort_key!r}.")
    completed = [row for row in rows if row.status == STATUS_COMPLETED]

    def key(row):
        value = row.sort_value(sort_key)
        return (math.isnan(value), 0.0 if math.isnan(value) else value, row.config_id)

    return sorted(completed, key=key)


def append_result(path, row, kind):
    """Append one row; the header is written with the first row only."""
    path = Path(path)
    columns = result_columns(kind)
    _, config_cls = MODEL_CLASSES[kind]
    frame = pd.DataFrame([row.as_record(config_cls.field_names())], columns=columns)
    header = not path.exists() or path.stat().st_size == 0
    frame.to_csv(path, mode="a", header=header, index=False, float_format="%.17g")


def read_results(path, kind=MODEL_STATEPRED):
    """Rows of a results file written by :func:`run_hyp_search`."""
    _, config_cls = MODEL_CLASSES[validate_model_kind(kind)]
    text_columns = {name: str for name in (*config_cls.field_names(), "status", "error")}
    try:
        frame = pd.read_csv(path, dtype=text_columns, float_precision="round_trip", keep_default_na=False, na_values=[""])
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise ParseError(f"cannot read results file {path}: {exc}") from exc
    missing = [column for column in result_columns(kind) if column not in frame.columns]
    if missing:
        raise ParseError(f"results file {path} lacks columns {missing}.")
    rows = []
    for record in frame.to_dict("records"):
        config = {}
        for name in config_cls.field_names():
            raw = record[name]
            config[name] = None if pd.isna(raw) else json.loads(raw)
        error = record["error"]
        rows.append(SearchResultRow(
            config_id=int(record["config_id"]),
            config=config,
            status=str(record["status"]),
            metrics={key: float(record[key]) for key in SORT_KEYS},
            runtime_s=float(record["runtime_s"]),
            error="" if pd.isna(error) else str(error),
        ))
    return rows


def write_summary(path, rows, sort_key, total):
    """Rewrite the sidecar summary JSON atomically."""
    ranked = rank_rows(rows, sort_key)
    summary = {
        "sort_key": sort_key,
        "total": total,
        "completed": sum(row.status == STATUS_COMPLETED for row in rows),
        "failed": sum(row.status == STATUS_FAILED for row in rows),
        "ranking": [
            {"config_id": row.config_id, sort_key: row.sort_value(sort_key), "config": row.config}
            for row in ranked
        ],
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(summary, sort_keys=True, indent=1, default=str) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def summary_path_for(results_path):
    path = Path(results_path)
    return path.with_name(path.stem + "_summary.json")


def run_hyp_search(dataset, hyp_options, kind=MODEL_STATEPRED, numruns=None, sort_key=DEFAULT_SORT_KEY,
                   workers=1, seed=0, results_path=None, resume=False):
    """Run a sampled sweep and rank its results.

    Each finished run is appended to ``results_path`` at once, and the
    sidecar summary JSON is rewritten, so an interrupted sweep leaves every
    completed row behind.  Run ``config_id`` trains with seed
    ``derive_seed(seed, config_id)`` unless ``seed`` is itself swept.

    Returns
    -------
    list of SearchResultRow
        Completed rows ranked ascending by ``sort_key``, followed by the
        failed rows.
    """
    kind = validate_model_kind(kind)
    if sort_key not in SORT_KEYS:
        raise UnknownSortKey(f"sort_key must be one of {list(SORT_KEYS)}; got {sort_key!r}.")
    configs = enumerate_configs(hyp_options, kind)
    sampled = sample_runs(configs, len(configs) if numruns is None else numruns, seed)
    rows = []
    if results_path is not None and resume and Path(results_path).exists():
        rows = [row for row in read_results(results_path, kind) if row.status == STATUS_COMPLETED]
        done = {row.config_id for row in rows}
        sampled = [(config_id, config) for config_id, config in sampled if config_id not in done]
        logger.info("resuming: %d completed runs found, %d to go", len(done), len(sampled))
    elif results_path is not None and Path(results_path).exists():
        Path(results_path).unlink()
    total = len(rows) + len(sampled)
    logger.info("hyperparameter search: %d of %d configurations", len(sampled), len(configs))

    def record(row):
        rows.append(row)
        if row.status == STATUS_COMPLETED:
            logger.info("run %d completed in %.2fs: %s=%.6g", row.config_id, row.runtime_s, sort_key, row.sort_value(sort_key))
        else:
            logger.warning("run %d failed: %s", row.config_id, row.error)
        if results_path is not None:
            append_result(results_path, row, kind)
            write_summary(summary_path_for(results_path), rows, sort_key, total)

    if workers <= 1:
        for config_id, config in sampled:
            logger.info("run %d started: %s", config_id, config)
            record(_run_one(kind, dataset, config_id, config, seed))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, kind, dataset, config_id, config, seed) for config_id, config in sampled]
            for future in as_completed(futures):
                record(future.result())
    failed = sorted((row for row in rows if row.status == STATUS_FAILED), key=lambda row: row.config_id)
    return rank_rows(rows, sort_key) + failed


__all__ = [
    "SearchResultRow",
    "enumerate_configs",
    "sample_runs",
    "run_hyp_search",
    "rank_rows",
    "read_results",
    "result_columns",
    "summary_path_for",
]
