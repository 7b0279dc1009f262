"""Datasets, index normalization, feature scaling and file readers/writers.

Data files store one state per row.  Models work on states as columns, so
the model modules transpose on the way in and out.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .constant import FMT_CSV, FMT_NDJSON, SNAPSHOT_FMT_Categories, TRAJECTORY_FMT_Categories, validate_category
from .core import DegenerateIndexes, NoIndexMap, ParseError, RaggedTrajectories, ShapeMismatch, numeric_matrix

logger = logging.getLogger(__name__)

INDEX_COLUMN = "t"


def round_half_away(values):
    """Round to the nearest integer, halves away from zero."""
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


@dataclass(frozen=True)
class IndexMap:
    """Affine map ``i = (t - t0) / dt`` between original and internal indexes."""

    t0: float
    dt: float

    def to_internal(self, t):
        return (np.asarray(t, dtype=float) - self.t0) / self.dt

    def to_original(self, i):
        return self.t0 + np.asarray(i, dtype=float) * self.dt


def normalize_indexes(ttr):
    """Map training indexes onto a unit-spaced integer grid.

    ``t0`` is the smallest index and ``dt`` the median of the consecutive
    differences of the sorted distinct indexes.

    Returns
    -------
    tuple
        ``(t0, dt, internal)`` with ``internal`` an integer array in the
        order of ``ttr``.

    Raises
    ------
    DegenerateIndexes
        Fewer than two distinct indexes, or two indexes rounding to the same
        grid point.
    """
    ttr = np.asarray(ttr, dtype=float).reshape(-1)
    if not np.isfinite(ttr).all():
        raise DegenerateIndexes("indexes must be finite.")
    distinct = np.unique(ttr)
    if distinct.size < 2:
        raise DegenerateIndexes(f"need at least 2 distinct indexes; got {distinct.size}.")
    t0 = float(distinct[0])
    dt = float(np.median(np.diff(distinct)))
    internal = round_half_away((ttr - t0) / dt).astype(int)
    values, counts = np.unique(internal, return_counts=True)
    if (counts > 1).any():
        clash = int(values[counts > 1][0])
        colliding = ttr[internal == clash].tolist()
        raise DegenerateIndexes(f"indexes {colliding} all round to internal index {clash} (t0={t0:g}, dt={dt:g}).")
    return t0, dt, internal


def map_new_index(index_map, t):
    """Internal (unrounded) index of original index ``t``."""
    if index_map is None:
        raise NoIndexMap("the index map has not been established; load training indexes first.")
    return index_map.to_internal(t)


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature affine scaling ``(x - shift) / scale``."""

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        """Min-max scaling of the rows of ``X`` onto ``[-1, 1]``."""
        X = np.asarray(X, dtype=float)
        X = X.reshape(-1, X.shape[-1])
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        scale = (hi - lo) / 2.0
        scale[scale == 0] = 1.0
        return cls(shift=(hi + lo) / 2.0, scale=scale)

    @classmethod
    def identity(cls, dim):
        return cls(shift=np.zeros(dim), scale=np.ones(dim))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.shift) / self.scale

    def inverse(self, X):
        return np.asarray(X, dtype=float) * self.scale + self.shift


@dataclass(frozen=True, eq=False)
class SnapshotDataset:
    """Indexed snapshots with optional validation and test splits.

    ``X*`` are ``n x d`` (one state per row) and ``t*`` hold the matching
    original indexes.  The training split is sorted by index on construction.
    """

    Xtr: np.ndarray
    ttr: np.ndarray
    Xva: np.ndarray | None = None
    tva: np.ndarray | None = None
    Xte: np.ndarray | None = None
    tte: np.ndarray | None = None

    def __post_init__(self):
        d = None
        for name in ("tr", "va", "te"):
            X, t = getattr(self, f"X{name}"), getattr(self, f"t{name}")
            if X is None and t is None:
                if name == "tr":
                    raise ValueError("Xtr and ttr are required.")
                continue
            if X is None or t is None:
                raise ValueError(f"X{name} and t{name} must be given together.")
            if name != "tr" and np.asarray(X).size == 0:
                object.__setattr__(self, f"X{name}", None)
                object.__setattr__(self, f"t{name}", None)
                continue
            X = numeric_matrix(np.atleast_2d(X), f"X{name}")
            t = np.asarray(t, dtype=float).reshape(-1)
            if X.shape[0] != t.size:
                raise ShapeMismatch(f"X{name} has {X.shape[0]} rows but t{name} has {t.size} indexes.")
            if not np.isfinite(t).all():
                raise ValueError(f"t{name} contains non-finite indexes.")
            if d is not None and X.shape[1] != d:
                raise ShapeMismatch(f"X{name} has {X.shape[1]} features; Xtr has {d}.")
            d = X.shape[1]
            if name == "tr":
                order = np.argsort(t, kind="stable")
                X, t = X[order], t[order]
            object.__setattr__(self, f"X{name}", X)
            object.__setattr__(self, f"t{name}", t)
        t0, dt, internal = normalize_indexes(self.ttr)
        object.__setattr__(self, "_index_map", IndexMap(t0, dt))
        object.__setattr__(self, "_itr", internal)

    @property
    def state_dim(self):
        return self.Xtr.shape[1]

    @property
    def index_map(self):
        return self._index_map

    @property
    def itr(self):
        """Internal integer training indexes (sorted, starting at 0)."""
        return self._itr

    @property
    def has_val(self):
        return self.Xva is not None

    @property
    def has_test(self):
        return self.Xte is not None and self.Xte.shape[0] > 0


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Equal-length trajectories, arrays of shape ``J x (m + 1) x d``."""

    Xtr: np.ndarray
    Xva: np.ndarray | None = None
    Xte: np.ndarray | None = None

    def __post_init__(self):
        shape = None
        for name in ("Xtr", "Xva", "Xte"):
            X = getattr(self, name)
            if X is None:
                if name == "Xtr":
                    raise ValueError("Xtr is required.")
                continue
            X = np.asarray(X, dtype=float)
            if X.ndim != 3 or X.shape[0] == 0:
                raise RaggedTrajectories(f"{name} must be a non-empty J x (m+1) x d array; got shape {X.shape}.")
            if X.shape[1] < 2:
                raise RaggedTrajectories(f"{name} trajectories need at least 2 states; got {X.shape[1]}.")
            if not np.isfinite(X).all():
                raise ValueError(f"{name} contains non-finite values.")
            if shape is not None and X.shape[1:] != shape:
                raise RaggedTrajectories(f"{name} trajectories have shape {X.shape[1:]}; Xtr has {shape}.")
            shape = X.shape[1:]
            object.__setattr__(self, name, X)

    @property
    def num_steps(self):
        """``m``: number of predicted steps per trajectory."""
        return self.Xtr.shape[1] - 1

    @property
    def state_dim(self):
        return self.Xtr.shape[2]

    @property
    def has_val(self):
        return self.Xva is not None

    @property
    def has_test(self):
        return self.Xte is not None


def _read_csv(path):
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def read_snapshot_csv(path):
    """Return ``(X, t)`` from a snapshot CSV with an index column ``t``."""
    frame = _read_csv(path)
    if INDEX_COLUMN not in frame.columns:
        raise ParseError(f"{path} has no '{INDEX_COLUMN}' column.")
    features = [column for column in frame.columns if column != INDEX_COLUMN]
    if not features:
        raise ParseError(f"{path} has no feature columns.")
    values = numeric_matrix(frame[[INDEX_COLUMN, *features]].to_numpy(), str(path), [INDEX_COLUMN, *features])
    return values[:, 1:], values[:, 0]


def read_states(path):
    """States (one per row) from a CSV; a ``t`` column is ignored."""
    frame = _read_csv(path)
    features = [column for column in frame.columns if column != INDEX_COLUMN]
    return numeric_matrix(frame[features].to_numpy(), str(path), features)


def save_snapshots(path, X, t=None):
    """Write states (rows) with header ``t,f0,f1,...``; ``t`` omitted when ``None``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    frame = pd.DataFrame(X, columns=[f"f{k}" for k in range(X.shape[1])])
    if t is not None:
        frame.insert(0, INDEX_COLUMN, np.asarray(t, dtype=float).reshape(-1))
    frame.to_csv(path, index=False, float_format="%.17g")


def load_snapshots(path, format=FMT_CSV, val_path=None, test_path=None):
    """Read a :class:`SnapshotDataset` from per-split snapshot files."""
    validate_category(format, SNAPSHOT_FMT_Categories, "snapshot format")
    Xtr, ttr = read_snapshot_csv(path)
    Xva = tva = Xte = tte = None
    if val_path is not None:
        Xva, tva = read_snapshot_csv(val_path)
    if test_path is not None:
        Xte, tte = read_snapshot_csv(test_path)
    logger.debug("loaded %d training snapshots from %s", Xtr.shape[0], path)
    return SnapshotDataset(Xtr, ttr, Xva, tva, Xte, tte)


def _stack(trajectories, label):
    if not trajectories:
        raise ParseError(f"{label} holds no trajectories.")
    shapes = {np.shape(item) for item in trajectories}
    if len(shapes) != 1:
        lengths = sorted({shape[0] if shape else 0 for shape in shapes})
        raise RaggedTrajectories(f"{label}: trajectories differ in length or state dimension (lengths {lengths}).")
    return np.stack(trajectories)


def read_ndjson(path):
    trajectories = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                traj = record["traj"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{number}: expected a {{\"traj\": [...]}} record.") from exc
            array = np.asarray(traj, dtype=object)
            if array.ndim != 2:
                raise RaggedTrajectories(f"{path}:{number}: states of one trajectory differ in dimension.")
            trajectories.append(numeric_matrix(traj, f"{path}:{number}"))
    return _stack(trajectories, str(path))


def read_csvdir(path):
    files = sorted(Path(path).glob("*.csv"))
    trajectories = [read_states(item) for item in files]
    return _stack(trajectories, str(path))


def read_trajectories(path, format=FMT_NDJSON):
    """``J x (m+1) x d`` array from an NDJSON file or a CSV directory."""
    validate_category(format, TRAJECTORY_FMT_Categories, "trajectory format")
    if format == FMT_NDJSON:
        return read_ndjson(path)
    return read_csvdir(path)


def save_trajectories(path, trajectories, format=FMT_NDJSON):
    """Write trajectories in the format :func:`read_trajectories` reads."""
    validate_category(format, TRAJECTORY_FMT_Categories, "trajectory format")
    trajectories = np.asarray(trajectories, dtype=float)
    if format == FMT_NDJSON:
        with open(path, "w", encoding="utf-8") as handle:
            for traj in trajectories:
                handle.write(json.dumps({"traj": traj.tolist()}) + "\n")
        return
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(trajectories))))
    for k, traj in enumerate(trajectories):
        save_snapshots(directory / f"traj_{k:0{width}d}.csv", traj)


def load_trajectories(path, format=FMT_NDJSON, val_path=None, test_path=None):
    """Read a :class:`TrajectoryDataset` from per-split trajectory files."""
    Xtr = read_trajectories(path, format)
    Xva = read_trajectories(val_path, format) if val_path is not None else None
    Xte = read_trajectories(test_path, format) if test_path is not None else None
    logger.debug("loaded %d training trajectories from %s", Xtr.shape[0], path)
    return TrajectoryDataset(Xtr, Xva, Xte)


__all__ = [
    "IndexMap",
    "Scaler",
    "SnapshotDataset",
    "TrajectoryDataset",
    "normalize_indexes",
    "map_new_index",
    "round_half_away",
    "load_snapshots",
    "save_snapshots",
    "read_snapshot_csv",
    "read_states",
    "load_trajectories",
    "read_trajectories",
    "save_trajectories",
]
