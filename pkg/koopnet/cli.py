"""Console script for koopnet."""

import json
import logging
import math
from pathlib import Path

import click
import numpy as np
import pandas as pd
import yaml

from . import datagen
from .checkpoint import load_checkpoint, save_checkpoint
from .constant import (
    DEFAULT_SORT_KEY,
    FMT_CSV,
    FMT_CSVDIR,
    FMT_NDJSON,
    GEN_Categories,
    GEN_LINEAR,
    MODEL_STATEPRED,
    validate_model_kind,
)
from .core import InvalidParams, KoopnetError, TrainingError
from .data import load_snapshots, load_trajectories, read_states, save_snapshots, save_trajectories
from .hypsearch import MODEL_CLASSES, run_hyp_search, summary_path_for
from .utils import tools
from .utils.plotdata import write_plot_data

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.json"
STATS_FILE = "stats.csv"
SUMMARY_FILE = "summary.json"
DEFAULT_RUN_DIR = "run"
TOP_RANKED = 5

CONFIG_ERRORS = (KoopnetError, ValueError, KeyError, TypeError, OSError, yaml.YAMLError)


class ConfigError(click.ClickException):
    """Invalid configuration, request or input file."""

    exit_code = 2


class TrainingFailure(click.ClickException):
    """Training stopped on a numerical failure."""

    exit_code = 3


def load_config(path):
    """Parse a YAML run configuration into a dict."""
    try:
        with open(path, encoding="utf-8") as handle:
            config = yaml.safe_load(handle)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"config {path} must be a mapping with a 'model' section.")
    return config


def _section(config, name, required=False):
    section = config.get(name)
    if section is None:
        if required:
            raise ConfigError(f"config has no '{name}' section.")
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"config section '{name}' must be a mapping.")
    return section


def resolve_seed(config):
    """Top-level ``seed``, overridden by ``KOOPMAN_SEED``."""
    return tools.seed_from_env(config.get("seed", 0))


def model_settings(config):
    """``(kind, hyperparameters)`` of the ``model`` section."""
    model = dict(_section(config, "model", required=True))
    kind = validate_model_kind(model.pop("kind", MODEL_STATEPRED))
    return kind, model


def _resolve(base_dir, path):
    if path is None:
        return None
    path = Path(path)
    return path if path.is_absolute() else base_dir / path


def load_dataset(kind, data, base_dir):
    """Dataset of ``kind`` from the ``data`` section (paths relative to ``base_dir``)."""
    if "train" not in data:
        raise ConfigError("data section needs a 'train' path.")
    paths = {split: _resolve(base_dir, data.get(split)) for split in ("train", "val", "test")}
    if kind == MODEL_STATEPRED:
        return load_snapshots(paths["train"], data.get("format", FMT_CSV), paths["val"], paths["test"])
    return load_trajectories(paths["train"], data.get("format", FMT_NDJSON), paths["val"], paths["test"])


def _finite_or_none(metrics):
    if metrics is None:
        return None
    return {name: (None if math.isnan(value) else value) for name, value in metrics.as_dict().items()}


def run_summary(model):
    """Config echo plus final-epoch (and test) metrics."""
    final = model.stats.final
    return {
        "model_kind": model.kind,
        "config": model.config.to_dict(),
        "epochs": len(model.stats),
        "final": {
            "tr": _finite_or_none(final.train if final else None),
            "va": _finite_or_none(final.val if final else None),
        },
        "test": _finite_or_none(model.stats.test),
    }


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


@click.group()
@click.option("--quiet", is_flag=True, help="Only log warnings and errors.")
@click.option("--verbose", is_flag=True, help="Log debugging detail.")
def main(quiet, verbose):
    """Koopman autoencoders for state and trajectory prediction."""
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_dir", type=click.Path(file_okay=False), help="Run directory (overrides output.run_dir).")
def fit(config_path, output_dir):
    """Train the model described by CONFIG_PATH and write a run directory."""
    config = load_config(config_path)
    base_dir = Path(config_path).resolve().parent
    try:
        kind, hyperparams = model_settings(config)
        hyperparams["seed"] = resolve_seed(config)
        model_cls, config_cls = MODEL_CLASSES[kind]
        model_config = config_cls.from_dict(hyperparams)
        dataset = load_dataset(kind, _section(config, "data", required=True), base_dir)
        model = model_cls(dataset, model_config)
        logger.debug("resolved %s config: %s", kind, model_config)
    except ConfigError:
        raise
    except CONFIG_ERRORS as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(output_dir or _section(config, "output").get("run_dir", DEFAULT_RUN_DIR))
    if not out.is_absolute() and output_dir is None:
        out = base_dir / out
    try:
        model.train_net()
        if dataset.has_test:
            model.test_net()
    except TrainingError as exc:
        raise TrainingFailure(str(exc)) from exc
    except (KoopnetError, np.linalg.LinAlgError) as exc:
        # test_net failures carry no epoch
        raise TrainingFailure(f"evaluation failed: {exc}") from exc
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / CHECKPOINT_FILE)
    model.stats.to_csv(out / STATS_FILE)
    summary = run_summary(model)
    _write_json(out / SUMMARY_FILE, summary)
    final = summary["final"]
    click.echo(f"trained {kind} for {summary['epochs']} epochs; run directory {out}")
    if final["tr"] is not None:
        click.echo(f"final pred_anae_tr: {final['tr']['pred_anae']}")
    if final["va"] is not None:
        click.echo(f"final pred_anae_va: {final['va']['pred_anae']}")
    if summary["test"] is not None:
        click.echo(f"test pred_anae: {summary['test']['pred_anae']}")


@main.command()
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "-t", "indexes", type=float, multiple=True, help="Original-unit index to predict (statepred).")
@click.option("--initial-states", type=click.Path(exists=True, dir_okay=False), help="CSV of initial states (trajpred).")
@click.option("--steps", type=int, default=None, help="Steps to roll out (trajpred; default: training length).")
@click.option("--output", "output_path", type=click.Path(dir_okay=False), required=True)
def predict(checkpoint_path, indexes, initial_states, steps, output_path):
    """Predict states from a trained checkpoint."""
    try:
        model = load_checkpoint(checkpoint_path)
    except KoopnetError as exc:
        raise ConfigError(str(exc)) from exc
    if model.kind == MODEL_STATEPRED:
        if initial_states is not None or steps is not None or not indexes:
            raise ConfigError("a statepred checkpoint predicts at --index values only.")
        X = model.predict_new(list(indexes))
        save_snapshots(output_path, X, np.asarray(indexes, dtype=float))
        click.echo(f"wrote {X.shape[0]} predicted states to {output_path}")
        return
    if indexes or initial_states is None:
        raise ConfigError("a trajpred checkpoint predicts from --initial-states only.")
    try:
        trajectories = model.predict_new(read_states(initial_states), steps)
    except CONFIG_ERRORS as exc:
        raise ConfigError(str(exc)) from exc
    save_trajectories(output_path, trajectories, FMT_NDJSON)
    click.echo(f"wrote {trajectories.shape[0]} trajectories of {trajectories.shape[1]} steps to {output_path}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--results", "results_path", type=click.Path(dir_okay=False), help="Results CSV (overrides hyp_search.results).")
def hypsearch(config_path, results_path):
    """Run the hyp_search block of CONFIG_PATH and print the best configs."""
    config = load_config(config_path)
    base_dir = Path(config_path).resolve().parent
    search = _section(config, "hyp_search", required=True)
    try:
        kind, fixed = model_settings(config)
        options = {**fixed, **(search.get("hyp_options") or {})}
        dataset = load_dataset(kind, _section(config, "data", required=True), base_dir)
        results = results_path or _resolve(
            base_dir, search.get("results", Path(_section(config, "output").get("run_dir", DEFAULT_RUN_DIR)) / "hypsearch.csv")
        )
        Path(results).parent.mkdir(parents=True, exist_ok=True)
        sort_key = search.get("sort_key", DEFAULT_SORT_KEY)
        rows = run_hyp_search(
            dataset,
            options,
            kind=kind,
            numruns=search.get("numruns"),
            sort_key=sort_key,
            workers=int(search.get("workers", 1)),
            seed=resolve_seed(config),
            results_path=results,
            resume=bool(search.get("resume", False)),
        )
    except CONFIG_ERRORS as exc:
        raise ConfigError(str(exc)) from exc
    ranked = [row for row in rows if row.status == "completed"][:TOP_RANKED]
    table = pd.DataFrame(
        [{"config_id": row.config_id, sort_key: row.sort_value(sort_key), **row.config} for row in ranked]
    )
    click.echo(f"{len(rows)} runs; results in {results}, summary in {summary_path_for(results)}")
    if not table.empty:
        click.echo(table.to_string(index=False))


def _parse_settings(pairs):
    settings = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value; got {pair!r}.")
        settings[key] = yaml.safe_load(value)
    return settings


def _generate(kind, params):
    """Trajectories plus the parameters that produced them."""
    params = dict(params)
    splits = params.pop("splits", None)
    split_seed = params.get("seed", 0)
    if kind == GEN_LINEAR:
        unknown = sorted(set(params) - {"A", "x0", "m", "seed"})
        if unknown:
            raise InvalidParams(f"linear system has no parameters {unknown}.")
        if "A" not in params or "x0" not in params or "m" not in params:
            raise InvalidParams("linear system needs A, x0 and m.")
        trajectories = datagen.gen_linear_system(params["A"], params["x0"], params["m"])
        dt = 1.0
    else:
        p = datagen.PolyManifoldParams.from_dict(params)
        trajectories = datagen.gen_poly_manifold(p)
        params = p.to_dict()
        dt = p.dt
    if splits is not None:
        params["splits"] = list(splits)
    return trajectories, params, dt, splits, split_seed


@main.command("gen-data")
@click.argument("kind", type=click.Choice(list(GEN_Categories)))
@click.option("--output", "output_dir", type=click.Path(file_okay=False), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), help="YAML file of generator parameters.")
@click.option("--set", "settings", multiple=True, help="Generator parameter as key=value (YAML value).")
@click.option("--format", "fmt", type=click.Choice([FMT_NDJSON, FMT_CSVDIR, FMT_CSV]), default=FMT_NDJSON, show_default=True)
def gen_data(kind, output_dir, params_path, settings, fmt):
    """Generate a synthetic dataset of KIND with a provenance record."""
    params = {}
    if params_path is not None:
        params.update(load_config(params_path))
    params.update(_parse_settings(settings))
    try:
        trajectories, params, dt, splits, split_seed = _generate(kind, params)
        parts = (
            dict(zip(("train", "val", "test"), datagen.split_trajectories(trajectories, splits, split_seed)))
            if splits is not None
            else {"trajectories": trajectories}
        )
        if fmt == FMT_CSV and any(part.shape[0] != 1 for part in parts.values()):
            raise InvalidParams("csv output holds one trajectory per file; use ndjson or csvdir.")
    except CONFIG_ERRORS as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, part in parts.items():
        if fmt == FMT_CSV:
            path = out / f"{name}.csv"
            save_snapshots(path, part[0], dt * np.arange(part.shape[1]))
        else:
            path = out / (f"{name}.ndjson" if fmt == FMT_NDJSON else name)
            save_trajectories(path, part, fmt)
        files[name] = path.name
    _write_json(out / "provenance.json", {"kind": kind, "format": fmt, "params": params, "files": files})
    click.echo(f"wrote {trajectories.shape[0]} {kind} trajectories to {out}")


@main.command("plot-data")
@click.argument("stats_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", type=click.Path(dir_okay=False), required=True)
def plot_data(stats_path, output_path):
    """Reshape a stats CSV into long form (epoch, split, metric, value)."""
    try:
        tidy = write_plot_data(stats_path, output_path)
    except KoopnetError as exc:
        raise ConfigError(str(exc)) from exc
    click.echo(f"wrote {len(tidy)} rows to {output_path}")


if __name__ == "__main__":
    main()  # pragma: no cover
