"""Shared core objects for koopnet.

This module contains the model-agnostic pieces used throughout the package:
the exception hierarchy, the frozen result dataclasses returned by the linear
algebra layer and the Koopman fit, and small validation helpers for numeric
input.  Model modules import from here instead of redefining checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Any, Iterable

import numpy as np


class KoopnetError(Exception):
    """Base class of every error raised by koopnet."""


class ShapeMismatch(KoopnetError, ValueError):
    """Operand shapes are incompatible."""


class ScalarKindMismatch(ShapeMismatch):
    """Real and complex operands were mixed without an explicit cast."""


class RankTooLarge(KoopnetError, ValueError):
    """Requested rank exceeds what the matrix supports."""


class ConvergenceFailure(KoopnetError, RuntimeError):
    """A dense decomposition did not converge."""


class DefectiveMatrix(KoopnetError, RuntimeError):
    """Eigenvector matrix is (near) singular."""


class DegenerateSpectrum(KoopnetError, RuntimeError):
    """Singular values or eigenvalues too close for a stable gradient."""


class NonScalarLoss(KoopnetError, ValueError):
    """backward() was called on a node that is not a real scalar."""


class SpecMismatch(KoopnetError, ValueError):
    """Encoder and decoder specifications do not fit together."""


class AllReferenceZero(KoopnetError, ValueError):
    """ANAE has no nonzero reference element to average over."""


class DegenerateIndexes(KoopnetError, ValueError):
    """Snapshot indexes cannot be normalized to a unique integer grid."""


class NoIndexMap(KoopnetError, RuntimeError):
    """The affine index map has not been established."""


class ParseError(KoopnetError, ValueError):
    """A data, stats or checkpoint file is malformed."""


class NonFiniteValue(ParseError):
    """A data file contains NaN or infinite values."""


class RaggedTrajectories(KoopnetError, ValueError):
    """Trajectories do not share a common length or state dimension."""


class NotTrained(KoopnetError, RuntimeError):
    """Prediction was requested before training."""


class NoTestSplit(KoopnetError, ValueError):
    """test_net() was called without a test split."""


class UnknownHyperparameter(KoopnetError, KeyError):
    """A hyperparameter name is not a config field."""


class UnknownSortKey(KoopnetError, KeyError):
    """A sort key is not in the recorded metric vocabulary."""


class InvalidParams(KoopnetError, ValueError):
    """Synthetic-system parameters violate their invariants."""


class TrainingError(KoopnetError, RuntimeError):
    """Training failed; carries the epoch at which it failed."""

    def __init__(self, epoch: int, cause: BaseException):
        self.epoch = epoch
        self.cause = cause
        super().__init__(f"Training failed at epoch {epoch}: {type(cause).__name__}: {cause}")


class ImaginaryResidualWarning(RuntimeWarning):
    """Evolved encoded states carry a non-negligible imaginary part."""


class ZeroEigenvalueWarning(RuntimeWarning):
    """Exact-mode eigenvector fell back to the projected mode."""


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition ``A ~ U diag(S) V^T``.

    Parameters
    ----------
    U : numpy.ndarray
        Left singular vectors, ``rows x r``.
    S : numpy.ndarray
        Singular values, length ``r``, strictly positive and non-increasing.
    V : numpy.ndarray
        Right singular vectors, ``cols x r``.
    effective_rank : int
        Number of retained triplets after the relative cutoff.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    effective_rank: int

    def reconstruct(self) -> np.ndarray:
        """Return ``U diag(S) V^T``."""
        return (self.U * self.S) @ self.V.T


@dataclass(frozen=True)
class EigResult:
    """Right eigenpairs sorted by magnitude, then angle.

    Columns of ``W`` have unit 2-norm, and their first nonzero component is
    real and positive.
    """

    eigenvalues: np.ndarray
    W: np.ndarray


@dataclass(frozen=True)
class KoopmanEigen:
    """Eigen-data of a fitted Koopman operator.

    Parameters
    ----------
    W : numpy.ndarray
        Complex DMD modes, ``encoded_size x r``.
    lam : numpy.ndarray
        Discrete eigenvalues (Lambda), length ``r``.
    omega : numpy.ndarray
        Continuous eigenvalues ``log(lam)`` on the principal branch, for an
        internal sampling interval of one.
    b : numpy.ndarray
        Initial coefficients ``W^+ y_0``.
    """

    W: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    b: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.lam.shape[0])


def as_matrix(value: Any, label: str = "tensor", allow_complex: bool = True) -> np.ndarray:
    """Return ``value`` as a finite 2-D float64 or complex128 array.

    One-dimensional input is taken as a column vector (``rows x 1``).
    """
    array = np.asarray(value)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(-1, 1)
    elif array.ndim != 2:
        raise ShapeMismatch(f"{label} must be one- or two-dimensional; got ndim={array.ndim}.")
    if np.iscomplexobj(array):
        if not allow_complex:
            raise ScalarKindMismatch(f"{label} must be real.")
        array = array.astype(np.complex128, copy=False)
    else:
        try:
            array = array.astype(np.float64, copy=False)
        except (TypeError, ValueError) as exc:
            raise ShapeMismatch(f"{label} must be numeric.") from exc
    if not np.isfinite(array).all():
        raise NonFiniteValue(f"{label} contains NaN or infinite values.")
    return array


def numeric_matrix(rows: np.ndarray, label: str, columns: list[str] | None = None) -> np.ndarray:
    """Return a finite float64 matrix, naming the first bad cell otherwise."""
    try:
        matrix = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{label} must be numeric.") from exc
    if matrix.ndim != 2 or matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise ParseError(f"{label} must be a non-empty two-dimensional table.")
    bad = np.argwhere(~np.isfinite(matrix))
    if bad.size:
        row, col = (int(item) for item in bad[0])
        name = columns[col] if columns is not None else col
        raise NonFiniteValue(f"{label} contains a non-finite value at row {row}, column {name!r}.")
    return matrix


def same_scalar_kind(a: np.ndarray, b: np.ndarray) -> bool:
    """Whether both arrays are real, or both complex."""
    return np.iscomplexobj(a) == np.iscomplexobj(b)


def validate_positive_int(value: Any, name: str, minimum: int = 1) -> int:
    """Validate an integer hyperparameter such as ``rank`` or ``numepochs``."""
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValueError(f"{name} must be an integer; got {value!r}.")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}; got {value}.")
    return int(value)


def validate_nonnegative(value: Any, name: str) -> float:
    """Validate a finite, non-negative float such as a loss weight."""
    try:
        number = float(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be a number; got {value!r}.") from exc
    if not math.isfinite(number) or number < 0:
        raise ValueError(f"{name} must be finite and >= 0; got {value!r}.")
    return number


def validate_layer_sizes(sizes: Iterable[Any] | None, name: str) -> tuple[int, ...] | None:
    """Validate a hidden-layer list; ``None`` passes through."""
    if sizes is None:
        return None
    if isinstance(sizes, (str, bytes)) or not isinstance(sizes, Iterable):
        raise ValueError(f"{name} must be a list of positive integers; got {sizes!r}.")
    return tuple(validate_positive_int(item, f"{name} entry") for item in sizes)


class ConfigMixin:
    """Mixin for frozen model-config dataclasses."""

    @classmethod
    def field_names(cls) -> list[str]:
        return [item.name for item in fields(cls)]

    def replace(self, **changes: Any):
        """Return a validated copy with ``changes`` applied."""
        unknown = sorted(set(changes) - set(self.field_names()))
        if unknown:
            raise UnknownHyperparameter(f"{type(self).__name__} has no fields {unknown}.")
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Plain dict with tuples turned into lists."""
        result = {}
        for name in self.field_names():
            value = getattr(self, name)
            result[name] = list(value) if isinstance(value, tuple) else value
        return result

    @classmethod
    def from_dict(cls, mapping: dict[str, Any]):
        unknown = sorted(set(mapping) - set(cls.field_names()))
        if unknown:
            raise UnknownHyperparameter(f"{cls.__name__} has no fields {unknown}.")
        return cls(**mapping)
