"""Dense real/complex matrix operations used by the Koopman pipeline.

Tensors are plain ``numpy.ndarray`` objects, two-dimensional, of dtype
``float64`` or ``complex128``; a vector is a ``rows x 1`` matrix.  All
functions are pure and return new arrays.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .constant import EIG_COND_MAX, SVD_REL_TOL
from .core import (
    ConvergenceFailure,
    DefectiveMatrix,
    EigResult,
    RankTooLarge,
    ScalarKindMismatch,
    ShapeMismatch,
    SvdResult,
    as_matrix,
    same_scalar_kind,
)


def to_complex(a):
    """Explicit real -> complex128 cast (the only promotion koopnet performs)."""
    return np.asarray(a).astype(np.complex128)


def matmul(a, b):
    """Matrix product with shape and scalar-kind checks.

    Raises
    ------
    ShapeMismatch
        If ``a.cols != b.rows``.
    ScalarKindMismatch
        If one operand is real and the other complex.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands; got shapes {a.shape} and {b.shape}.")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul shapes {a.shape} and {b.shape} are not aligned.")
    if not same_scalar_kind(a, b):
        raise ScalarKindMismatch("matmul operands must both be real or both complex; cast with to_complex().")
    return a @ b


def thin_svd(a):
    """Full thin SVD ``a = U diag(S) Vh`` with deterministic signs.

    Each left singular vector is flipped so that its largest-magnitude
    component is positive (real part, for complex input).
    """
    a = np.asarray(a)
    try:
        U, S, Vh = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            U, S, Vh = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceFailure(f"SVD did not converge for a {a.shape} matrix.") from exc
    if U.shape[1]:
        pivot = np.argmax(np.abs(U), axis=0)
        signs = np.sign(U[pivot, np.arange(U.shape[1])].real)
        signs[signs == 0] = 1.0
        U = U * signs
        Vh = Vh * signs[:, None]
    return U, S, Vh


def retained_count(S, rel_tol=SVD_REL_TOL):
    """Number of singular values at or above ``rel_tol * S[0]``."""
    if S.size == 0 or S[0] <= 0:
        return 0
    return int(np.count_nonzero(S >= rel_tol * S[0]))


def svd_truncated(a, rank):
    """Top-``rank`` singular triplets of a real matrix.

    Parameters
    ----------
    a : array_like
        Real ``rows x cols`` matrix.
    rank : int
        Requested number of triplets, ``1 <= rank <= min(rows, cols)``.

    Returns
    -------
    SvdResult
        Triplets with ``S >= 1e-10 * S[0]``; ``effective_rank`` may be lower
        than ``rank`` when trailing singular values fall under the cutoff.
    """
    a = as_matrix(a, "svd input", allow_complex=False)
    limit = min(a.shape)
    if rank < 1:
        raise ValueError(f"rank must be >= 1; got {rank}.")
    if rank > limit:
        raise RankTooLarge(f"rank {rank} exceeds min(rows, cols) = {limit}.")
    U, S, Vh = thin_svd(a)
    r = min(rank, retained_count(S))
    return SvdResult(U=U[:, :r], S=S[:r], V=Vh[:r, :].T, effective_rank=r)


def spectral_order(values):
    """Indexes sorting ``values`` by magnitude descending, then angle ascending.

    Magnitudes equal to 12 significant digits count as ties; angles are taken
    in ``(-pi, pi]``.
    """
    values = np.asarray(values)
    magnitude = np.abs(values)
    scale = magnitude.max() if magnitude.size and magnitude.max() > 0 else 1.0
    rounded = np.round(magnitude / scale, 12)
    angle = np.angle(values)
    angle = np.where(angle <= -np.pi, np.pi, angle)
    return np.lexsort((angle, -rounded))


def normalize_eigenvectors(W):
    """Unit 2-norm columns, first nonzero component rotated onto the positive real axis."""
    W = np.array(W, dtype=np.complex128)
    norms = np.linalg.norm(W, axis=0)
    norms[norms == 0] = 1.0
    W = W / norms
    for k in range(W.shape[1]):
        column = W[:, k]
        tol = 1e-12 * np.abs(column).max() if column.size else 0.0
        nonzero = np.flatnonzero(np.abs(column) > tol)
        if nonzero.size:
            first = column[nonzero[0]]
            W[:, k] = column * (np.abs(first) / first)
    return W


def eig(a):
    """Eigendecomposition of a square real or complex matrix.

    Returns
    -------
    EigResult
        Eigenvalues and unit-norm right eigenvectors in deterministic order.

    Raises
    ------
    DefectiveMatrix
        If the eigenvector matrix has condition number above 1e12.
    ConvergenceFailure
        If LAPACK does not converge.
    """
    a = as_matrix(a, "eig input")
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"eig needs a square matrix; got {a.shape}.")
    try:
        values, vectors = scipy.linalg.eig(a, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"Eigendecomposition did not converge for a {a.shape} matrix.") from exc
    order = spectral_order(values)
    values = np.asarray(values, dtype=np.complex128)[order]
    W = normalize_eigenvectors(vectors[:, order])
    cond = np.linalg.cond(W)
    if not np.isfinite(cond) or cond > EIG_COND_MAX:
        raise DefectiveMatrix(f"Eigenvector matrix condition number {cond:.3g} exceeds {EIG_COND_MAX:.0e}.")
    return EigResult(eigenvalues=values, W=W)


def pinv(a):
    """Moore-Penrose pseudoinverse through SVD with the 1e-10 relative cutoff."""
    a = as_matrix(a, "pinv input")
    U, S, Vh = thin_svd(a)
    r = retained_count(S)
    if r == 0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=a.dtype)
    return (Vh[:r, :].conj().T / S[:r]) @ U[:, :r].conj().T


def matexp_eigs(omega, i):
    """Elementwise ``exp(omega * i)`` for complex ``omega`` and real ``i``."""
    return np.exp(np.asarray(omega, dtype=np.complex128) * float(i))
