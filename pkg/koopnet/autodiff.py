"""Reverse-mode differentiation over dense real and complex matrices.

A :class:`Tape` records every operation of one forward pass.  Each operation
registers a vector-Jacobian product (VJP) that maps the adjoints of its
outputs to the adjoints of its inputs; :meth:`Tape.backward` replays those
rules in exact reverse registration order.

Complex adjoints follow the convention ``grad = dL/dRe(z) + i dL/dIm(z)`` for
a real loss ``L``.  A holomorphic map ``w = f(z)`` therefore propagates
``grad_z = conj(f'(z)) * grad_w``, and real nodes keep the real part of the
adjoint they receive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import linalg
from .constant import ACT_LINEAR, ACT_RELU, ACT_SIGMOID, ACT_TANH, SPECTRUM_GAP_REL, validate_activation
from .core import DegenerateSpectrum, NonScalarLoss, RankTooLarge, ScalarKindMismatch, ShapeMismatch


class Node:
    """One value on a tape.

    Parameters
    ----------
    value : numpy.ndarray
        Two-dimensional float64 or complex128 array.
    tape : Tape
        Owning tape.
    requires_grad : bool
        Whether gradients flow to (leaf) or through (intermediate) this node.
    name : str or None
        Optional label used in error messages.
    """

    __slots__ = ("value", "grad", "requires_grad", "tape", "name", "is_leaf")

    def __init__(self, value, tape, requires_grad=False, name=None, is_leaf=True):
        self.value = value
        self.grad = np.zeros_like(value)
        self.requires_grad = requires_grad
        self.tape = tape
        self.name = name
        self.is_leaf = is_leaf

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_complex(self):
        return np.iscomplexobj(self.value)

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return multiply(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape}, dtype={self.value.dtype}, requires_grad={self.requires_grad})"


@dataclass(frozen=True)
class _Record:
    op: str
    inputs: tuple
    outputs: tuple
    vjp: Callable


class Tape:
    """Registration-ordered record of one forward pass.

    A tape is confined to the thread that created it.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.records: list[_Record] = []

    def leaf(self, value, requires_grad=True, name=None):
        """Register a leaf (parameter or input)."""
        node = Node(_as_value(value), self, requires_grad=requires_grad, name=name, is_leaf=True)
        self.nodes.append(node)
        return node

    def constant(self, value, name=None):
        """Register a leaf that never receives gradient."""
        return self.leaf(value, requires_grad=False, name=name)

    def apply(self, op, inputs: Sequence[Node], values: Sequence[np.ndarray], vjp):
        """Register an operation and return its output nodes.

        ``vjp(output_grads)`` must return one adjoint (or ``None``) per input.
        Nothing is recorded when no input requires gradient.
        """
        for node in inputs:
            if node.tape is not self:
                raise ValueError(f"{op}: operands belong to different tapes.")
        tracked = any(node.requires_grad for node in inputs)
        outputs = tuple(
            Node(_as_value(value), self, requires_grad=tracked, is_leaf=False) for value in values
        )
        self.nodes.extend(outputs)
        if tracked:
            self.records.append(_Record(op=op, inputs=tuple(inputs), outputs=outputs, vjp=vjp))
        return outputs

    def backward(self, loss):
        """Backpropagate from a real scalar loss.

        Returns
        -------
        dict
            Maps every ``requires_grad`` leaf to ``dLoss/dLeaf``; leaves that
            do not participate map to zeros.  The same arrays are stored on
            ``leaf.grad``.
        """
        if loss.tape is not self:
            raise ValueError("loss node belongs to a different tape.")
        if loss.value.size != 1 or loss.is_complex:
            raise NonScalarLoss(f"backward needs a real scalar loss; got shape {loss.shape}, dtype {loss.value.dtype}.")
        grads = {loss: np.ones_like(loss.value)}
        for record in reversed(self.records):
            out_grads = [grads.pop(node, None) for node in record.outputs]
            if all(grad is None for grad in out_grads):
                continue
            out_grads = [
                np.zeros_like(node.value) if grad is None else grad
                for node, grad in zip(record.outputs, out_grads)
            ]
            in_grads = record.vjp(out_grads)
            for node, grad in zip(record.inputs, in_grads):
                if grad is None or not node.requires_grad:
                    continue
                grad = _match_kind(node, grad)
                if node in grads:
                    grads[node] = grads[node] + grad
                else:
                    grads[node] = grad
        result = {}
        for node in self.nodes:
            if node.is_leaf and node.requires_grad:
                node.grad = grads.get(node, np.zeros_like(node.value))
                result[node] = node.grad
        return result


def _as_value(value):
    array = np.asarray(value)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(-1, 1)
    elif array.ndim != 2:
        raise ShapeMismatch(f"Tape values must be at most two-dimensional; got ndim={array.ndim}.")
    if np.iscomplexobj(array):
        return array.astype(np.complex128, copy=False)
    return array.astype(np.float64, copy=False)


def _match_kind(node, grad):
    grad = np.asarray(grad)
    if node.is_complex:
        return grad.astype(np.complex128, copy=False)
    return np.real(grad).astype(np.float64, copy=False)


def _unbroadcast(grad, shape):
    """Sum ``grad`` over the axes along which an operand of ``shape`` was broadcast."""
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_kinds(op, a, b):
    if a.is_complex != b.is_complex:
        raise ScalarKindMismatch(f"{op}: operands must both be real or both complex; use to_complex().")


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast.") from exc


def _constant_like(tape, value):
    return value if isinstance(value, Node) else tape.constant(value)


def detach(a):
    """Same value, gradient flow blocked."""
    return a.tape.constant(a.value.copy(), name=a.name)


def add(a, b):
    b = _constant_like(a.tape, b)
    _check_kinds("add", a, b)
    _check_broadcast("add", a, b)

    def vjp(grads):
        (g,) = grads
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return a.tape.apply("add", (a, b), (a.value + b.value,), vjp)[0]


def subtract(a, b):
    b = _constant_like(a.tape, b)
    _check_kinds("subtract", a, b)
    _check_broadcast("subtract", a, b)

    def vjp(grads):
        (g,) = grads
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return a.tape.apply("subtract", (a, b), (a.value - b.value,), vjp)[0]


def scale(a, c):
    """Multiply by a constant scalar."""
    c = complex(c) if np.iscomplexobj(c) else float(c)
    if isinstance(c, complex) and not a.is_complex:
        raise ScalarKindMismatch("scale: complex factor on a real node; use to_complex().")

    def vjp(grads):
        (g,) = grads
        return (np.conj(c) * g,)

    return a.tape.apply("scale", (a,), (c * a.value,), vjp)[0]


def multiply(a, b):
    """Elementwise product with broadcasting."""
    b = _constant_like(a.tape, b)
    _check_kinds("multiply", a, b)
    _check_broadcast("multiply", a, b)

    def vjp(grads):
        (g,) = grads
        return (
            _unbroadcast(g * np.conj(b.value), a.shape),
            _unbroadcast(g * np.conj(a.value), b.shape),
        )

    return a.tape.apply("multiply", (a, b), (a.value * b.value,), vjp)[0]


def reciprocal(a):
    value = 1.0 / a.value

    def vjp(grads):
        (g,) = grads
        return (-g * np.conj(value * value),)

    return a.tape.apply("reciprocal", (a,), (value,), vjp)[0]


def matmul(a, b):
    b = _constant_like(a.tape, b)
    value = linalg.matmul(a.value, b.value)

    def vjp(grads):
        (g,) = grads
        return g @ b.value.conj().T, a.value.conj().T @ g

    return a.tape.apply("matmul", (a, b), (value,), vjp)[0]


def transpose(a):
    """Plain (non-conjugating) transpose."""

    def vjp(grads):
        (g,) = grads
        return (g.T,)

    return a.tape.apply("transpose", (a,), (a.value.T.copy(),), vjp)[0]


def concat_columns(nodes):
    nodes = list(nodes)
    if not nodes:
        raise ShapeMismatch("concat_columns needs at least one node.")
    rows = {node.shape[0] for node in nodes}
    if len(rows) != 1:
        raise ShapeMismatch(f"concat_columns: row counts differ: {sorted(rows)}.")
    if len({node.is_complex for node in nodes}) != 1:
        raise ScalarKindMismatch("concat_columns: operands must share a scalar kind.")
    widths = [node.shape[1] for node in nodes]
    bounds = np.cumsum([0, *widths])

    def vjp(grads):
        (g,) = grads
        return tuple(g[:, bounds[k]:bounds[k + 1]] for k in range(len(nodes)))

    value = np.concatenate([node.value for node in nodes], axis=1)
    return nodes[0].tape.apply("concat_columns", tuple(nodes), (value,), vjp)[0]


def slice_columns(a, columns):
    """Select columns by slice or integer index array."""
    if isinstance(columns, slice):
        index = np.arange(a.shape[1])[columns]
    else:
        index = np.asarray(columns, dtype=int).reshape(-1)
    if index.size and (index.min() < -a.shape[1] or index.max() >= a.shape[1]):
        raise ShapeMismatch(f"slice_columns: index out of range for {a.shape[1]} columns.")

    def vjp(grads):
        (g,) = grads
        out = np.zeros_like(a.value, dtype=g.dtype)
        np.add.at(out, (slice(None), index), g)
        return (out,)

    return a.tape.apply("slice_columns", (a,), (a.value[:, index],), vjp)[0]


def elementwise_activation(a, kind):
    """Apply ``tanh``, ``relu``, ``sigmoid`` or ``linear`` elementwise (real nodes)."""
    validate_activation(kind)
    if a.is_complex:
        raise ScalarKindMismatch("activations are defined for real nodes only.")
    x = a.value
    if kind == ACT_TANH:
        value = np.tanh(x)
        local = 1.0 - value * value
    elif kind == ACT_RELU:
        value = np.maximum(x, 0.0)
        local = (x > 0).astype(float)
    elif kind == ACT_SIGMOID:
        value = 0.5 * (1.0 + np.tanh(0.5 * x))
        local = value * (1.0 - value)
    elif kind == ACT_LINEAR:
        value = x.copy()
        local = np.ones_like(x)

    def vjp(grads):
        (g,) = grads
        return (g * local,)

    return a.tape.apply(f"activation[{kind}]", (a,), (value,), vjp)[0]


def mse(a, b):
    """Mean of squared elementwise differences (real scalar)."""
    b = _constant_like(a.tape, b)
    _check_kinds("mse", a, b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse: shapes {a.shape} and {b.shape} differ.")
    diff = a.value - b.value
    n = diff.size

    def vjp(grads):
        (g,) = grads
        local = (2.0 / n) * g.item() * diff
        return local, -local

    return a.tape.apply("mse", (a, b), (np.mean(np.abs(diff) ** 2),), vjp)[0]


def l1_mean(a):
    """Mean absolute value (real nodes)."""
    if a.is_complex:
        raise ScalarKindMismatch("l1_mean is defined for real nodes only.")
    n = a.value.size

    def vjp(grads):
        (g,) = grads
        return (g.item() * np.sign(a.value) / n,)

    return a.tape.apply("l1_mean", (a,), (np.mean(np.abs(a.value)),), vjp)[0]


def sum_squares(a):
    """Sum of squared magnitudes (real scalar)."""

    def vjp(grads):
        (g,) = grads
        return (2.0 * g.item() * a.value,)

    return a.tape.apply("sum_squares", (a,), (np.sum(np.abs(a.value) ** 2),), vjp)[0]


def real_part(a):
    def vjp(grads):
        (g,) = grads
        return (g.astype(np.complex128),)

    return a.tape.apply("real_part", (a,), (np.real(a.value).copy(),), vjp)[0]


def to_complex(a):
    """Documented real -> complex cast."""

    def vjp(grads):
        (g,) = grads
        return (np.real(g),)

    return a.tape.apply("to_complex", (a,), (linalg.to_complex(a.value),), vjp)[0]


def complex_log(a):
    """Principal-branch logarithm (imaginary part in ``(-pi, pi]``)."""
    z = linalg.to_complex(a.value)
    value = np.log(z)

    def vjp(grads):
        (g,) = grads
        return (g * np.conj(1.0 / z),)

    return a.tape.apply("complex_log", (a,), (value,), vjp)[0]


def complex_exp_evolve(omega, indexes, coefficients):
    """Columns ``exp(omega * i) * coefficients`` for each real index ``i``.

    Parameters
    ----------
    omega, coefficients : Node
        Complex ``r x 1`` nodes.
    indexes : array_like
        Real evolution indexes (constants).

    Returns
    -------
    Node
        ``r x len(indexes)`` complex node.
    """
    if omega.shape != coefficients.shape or omega.shape[1] != 1:
        raise ShapeMismatch(f"complex_exp_evolve: omega {omega.shape} and coefficients {coefficients.shape} must be matching r x 1 vectors.")
    t = np.asarray(indexes, dtype=float).reshape(1, -1)
    growth = np.exp(linalg.to_complex(omega.value) * t)
    value = growth * coefficients.value

    def vjp(grads):
        (g,) = grads
        g_omega = np.sum(t * np.conj(value) * g, axis=1, keepdims=True)
        g_coef = np.sum(np.conj(growth) * g, axis=1, keepdims=True)
        return g_omega, g_coef

    return omega.tape.apply("complex_exp_evolve", (omega, coefficients), (value,), vjp)[0]


def _check_gaps(values, label):
    values = np.asarray(values).reshape(-1)
    if values.size < 2:
        return
    largest = np.abs(values).max()
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() <= SPECTRUM_GAP_REL * largest:
        raise DegenerateSpectrum(f"{label} are not separated by more than {SPECTRUM_GAP_REL:g} x {largest:.3g}; gradient is undefined.")


def svd_truncated(a, rank):
    """Differentiable truncated SVD of a real node.

    Returns
    -------
    tuple of Node
        ``U`` (rows x r), ``S`` (r x 1) and ``V`` (cols x r), ``r`` the
        effective rank after the relative cutoff.
    """
    if a.is_complex:
        raise ScalarKindMismatch("svd_truncated is defined for real nodes only.")
    m, n = a.shape
    if rank < 1:
        raise ValueError(f"rank must be >= 1; got {rank}.")
    if rank > min(m, n):
        raise RankTooLarge(f"rank {rank} exceeds min(rows, cols) = {min(m, n)}.")
    U, S, Vh = linalg.thin_svd(a.value)
    V = Vh.T
    k = S.shape[0]
    r = min(rank, linalg.retained_count(S))

    def vjp(grads):
        gU, gS, gV = grads
        kept = np.arange(k) < r
        pairs = kept[:, None] | kept[None, :]
        np.fill_diagonal(pairs, False)
        if pairs.any():
            gaps = np.abs(S[:, None] - S[None, :])
            if (gaps[pairs] <= SPECTRUM_GAP_REL * S[0]).any():
                raise DegenerateSpectrum(f"singular values {S[:r]} are too close for the SVD gradient.")
        GU = np.zeros((m, k))
        GV = np.zeros((n, k))
        GS = np.zeros(k)
        GU[:, :r] = gU
        GV[:, :r] = gV
        GS[:r] = gS.reshape(-1)
        E = S[None, :] ** 2 - S[:, None] ** 2
        E[~pairs] = 1.0
        F = np.where(pairs, 1.0 / E, 0.0)
        UtgU = U.T @ GU
        VtgV = V.T @ GV
        inner = (F * (UtgU - UtgU.T)) * S[None, :] + S[:, None] * (F * (VtgV - VtgV.T)) + np.diag(GS)
        grad = U @ inner @ V.T
        Sr = S[:r]
        if m > k:
            left = GU[:, :r] / Sr
            grad += (left - U @ (U.T @ left)) @ V[:, :r].T
        if n > k:
            right = (GV[:, :r] / Sr).T
            grad += U[:, :r] @ (right - (right @ V) @ V.T)
        return (grad,)

    return a.tape.apply(
        "svd_truncated", (a,), (U[:, :r], S[:r].reshape(-1, 1), V[:, :r]), vjp
    )


def eig(a):
    """Differentiable eigendecomposition.

    Returns
    -------
    tuple of Node
        Eigenvalues (complex ``r x 1``) and unit-norm eigenvectors (complex
        ``r x r``).  The eigenvector adjoint is exact for losses that do not
        depend on the per-column phase, which holds for every DMD
        reconstruction ``W diag(.) W^+``.
    """
    result = linalg.eig(a.value)
    L = result.eigenvalues
    V = result.W

    def vjp(grads):
        gL, gV = grads
        _check_gaps(L, "eigenvalues")
        Vh = V.conj().T
        VhgV = Vh @ gV
        ret = VhgV - (Vh @ V) * np.real(np.diag(VhgV))[None, :]
        E = np.conj(L)[None, :] - np.conj(L)[:, None]
        np.fill_diagonal(E, 1.0)
        ret = ret / E
        np.fill_diagonal(ret, gL.reshape(-1))
        return (scipy.linalg.solve(Vh, ret @ Vh),)

    return a.tape.apply("eig", (a,), (L.reshape(-1, 1), V), vjp)


def pinv_from_svd(a):
    """Differentiable Moore-Penrose pseudoinverse (constant-rank adjoint)."""
    value = linalg.pinv(a.value)

    def vjp(grads):
        (g,) = grads
        P = value
        Ph = P.conj().T
        gh = g.conj().T
        left = np.eye(a.shape[0]) - a.value @ P
        right = np.eye(a.shape[1]) - P @ a.value
        grad = -Ph @ g @ Ph + left @ gh @ P @ Ph + Ph @ P @ gh @ right
        return (grad,)

    return a.tape.apply("pinv_from_svd", (a,), (value,), vjp)[0]
