"""Loss terms, the composite loss, the ANAE metric and per-run statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd

from . import autodiff as ad
from .constant import (
    METRIC_NAMES,
    METRIC_SPLITS,
    MODEL_STATEPRED,
    SPLIT_TRAIN,
    SPLIT_VAL,
    STATS_COLUMNS,
    SORT_KEYS,
    validate_model_kind,
)
from .core import AllReferenceZero, ParseError, ShapeMismatch, validate_nonnegative


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of ``L = L_lin + alpha (L_recon + L_pred) + beta L_AE + gamma L_K``."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for item in fields(self):
            object.__setattr__(self, item.name, validate_nonnegative(getattr(self, item.name), item.name))

    @classmethod
    def for_trajpred(cls, alpha, beta):
        """TrajPred ties the K-layer decay to the autoencoder decay."""
        return cls(alpha=alpha, beta=beta, gamma=beta)


def mse(p, q):
    """Mean of squared elementwise differences over all elements."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise ShapeMismatch(f"mse operands have shapes {p.shape} and {q.shape}.")
    return float(np.mean(np.abs(p - q) ** 2))


def anae(p, q, eps=0.0):
    """Average normalized absolute error, in percent.

    Averages ``|p_i - q_i| / |p_i|`` over the flattened elements with a
    nonzero reference ``p_i`` (``|p_i| > eps`` when ``eps`` is positive).

    Raises
    ------
    AllReferenceZero
        If no reference element qualifies.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != q.shape:
        raise ShapeMismatch(f"anae operands have {p.size} and {q.size} elements.")
    mask = np.abs(p) > eps if eps > 0 else p != 0
    if not mask.any():
        raise AllReferenceZero("anae needs at least one nonzero reference element.")
    return float(100.0 * np.mean(np.abs(p[mask] - q[mask]) / np.abs(p[mask])))


def anae_or_nan(p, q, eps=0.0):
    """:func:`anae`, with NaN in place of :class:`AllReferenceZero` (per-epoch reporting)."""
    try:
        return anae(p, q, eps)
    except AllReferenceZero:
        return float("nan")


def autoencoder_decay(bound, names):
    """Sum of squared encoder and decoder weights."""
    terms = [ad.sum_squares(bound[name]) for name in names]
    if not terms:
        raise ValueError("autoencoder_decay needs at least one weight.")
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return total


def k_regularizer(kind, K):
    """``mean |K|`` for StatePred, sum of squared K-layer weights for TrajPred."""
    validate_model_kind(kind)
    if kind == MODEL_STATEPRED:
        return ad.l1_mean(K)
    return ad.sum_squares(K)


def total_loss(recon, lin, pred, ae_decay, k_decay, weights):
    """Composite training loss as a differentiable scalar node."""
    loss = ad.add(lin, ad.scale(ad.add(recon, pred), weights.alpha))
    loss = ad.add(loss, ad.scale(ae_decay, weights.beta))
    return ad.add(loss, ad.scale(k_decay, weights.gamma))


@dataclass(frozen=True)
class EpochMetrics:
    """Losses and ANAEs (percent) of one split after one epoch."""

    recon_loss: float
    recon_anae: float
    lin_loss: float
    lin_anae: float
    pred_loss: float
    pred_anae: float
    total_loss: float

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train: EpochMetrics
    val: EpochMetrics | None = None

    def as_row(self):
        row = {"epoch": self.epoch}
        for split, metrics in ((SPLIT_TRAIN, self.train), (SPLIT_VAL, self.val)):
            for name in METRIC_NAMES + ("total_loss",):
                row[f"{name}_{split}"] = np.nan if metrics is None else getattr(metrics, name)
        return row


@dataclass
class RunStats:
    """Per-epoch metrics of a run plus optional test metrics."""

    records: list = field(default_factory=list)
    test: EpochMetrics | None = None

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def to_frame(self):
        """Stats table with one row per epoch and the fixed column set."""
        frame = pd.DataFrame([record.as_row() for record in self.records], columns=list(STATS_COLUMNS))
        return frame.astype({"epoch": int}) if len(frame) else frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")

    @classmethod
    def from_csv(cls, path):
        frame = read_stats_frame(path)
        stats = cls()
        for row in frame.to_dict("records"):
            metrics = {}
            for split in METRIC_SPLITS:
                values = {name: row[f"{name}_{split}"] for name in METRIC_NAMES + ("total_loss",)}
                metrics[split] = None if all(pd.isna(v) for v in values.values()) else EpochMetrics(**values)
            stats.append(EpochRecord(int(row["epoch"]), metrics[SPLIT_TRAIN], metrics[SPLIT_VAL]))
        return stats

    def summary(self):
        """``{final|avg}_{metric}_{split}`` for every sort key; NaN when absent."""
        frame = self.to_frame()
        result = {}
        for key in SORT_KEYS:
            reduction, column = key.split("_", 1)
            values = frame[column].dropna() if len(frame) else pd.Series(dtype=float)
            if values.empty:
                result[key] = float("nan")
            elif reduction == "final":
                result[key] = float(values.iloc[-1])
            else:
                result[key] = float(values.mean())
        return result

    @property
    def final(self):
        return self.records[-1] if self.records else None


def read_stats_frame(path):
    """Read a stats CSV and check its column set."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise ParseError(f"cannot read stats file {path}: {exc}") from exc
    missing = [column for column in STATS_COLUMNS if column not in frame.columns]
    if missing:
        raise ParseError(f"stats file {path} lacks columns {missing}.")
    return frame[list(STATS_COLUMNS)]


__all__ = [
    "LossWeights",
    "EpochMetrics",
    "EpochRecord",
    "RunStats",
    "mse",
    "anae",
    "anae_or_nan",
    "autoencoder_decay",
    "k_regularizer",
    "total_loss",
    "read_stats_frame",
]
