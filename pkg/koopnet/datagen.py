"""Synthetic dynamical systems with exact closed-form trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ConfigMixin, InvalidParams, ShapeMismatch, as_matrix


def gen_linear_system(A, x0, m):
    """Trajectories ``x_{i+1} = A x_i`` for ``i = 0..m``.

    Parameters
    ----------
    A : array_like
        Square ``d x d`` matrix.
    x0 : array_like
        One initial state (length ``d``) or ``J x d`` initial states.
    m : int
        Number of steps.

    Returns
    -------
    numpy.ndarray
        ``J x (m + 1) x d``; row 0 of every trajectory is its initial state.
    """
    A = as_matrix(A, "A", allow_complex=False)
    if A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"A must be square; got {A.shape}.")
    X0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if X0.shape[1] != A.shape[0]:
        raise ShapeMismatch(f"initial states have dimension {X0.shape[1]}; A is {A.shape}.")
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidParams(f"m must be a positive integer; got {m!r}.")
    out = np.empty((X0.shape[0], m + 1, A.shape[0]))
    out[:, 0] = X0
    for i in range(m):
        out[:, i + 1] = out[:, i] @ A.T
    return out


@dataclass(frozen=True)
class PolyManifoldParams(ConfigMixin):
    """System ``x1' = mu x1``, ``x2' = lam (x2 - x1^2)`` with ``lam < mu < 0``."""

    mu: float = -0.05
    lam: float = -1.0
    dt: float = 0.02
    m: int = 50
    low: float = -0.5
    high: float = 0.5
    count: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (self.lam < self.mu < 0):
            raise InvalidParams(f"need lam < mu < 0; got lam={self.lam}, mu={self.mu}.")
        if not self.dt > 0:
            raise InvalidParams(f"dt must be > 0; got {self.dt}.")
        for name in ("m", "count"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidParams(f"{name} must be a positive integer; got {value!r}.")
        if not self.low < self.high:
            raise InvalidParams(f"box bounds need low < high; got [{self.low}, {self.high}].")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise InvalidParams(f"seed must be a non-negative integer; got {self.seed!r}.")

    @property
    def manifold_coefficient(self):
        """``c = lam / (lam - 2 mu)``: the slow manifold is ``x2 = c x1^2``."""
        return self.lam / (self.lam - 2.0 * self.mu)


def poly_manifold_states(p, x0, t):
    """Closed-form states at times ``t`` from initial states ``x0`` (``J x 2``).

    Returns ``J x len(t) x 2``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    t = np.asarray(t, dtype=float).reshape(1, -1)
    c = p.manifold_coefficient
    x1_0 = x0[:, :1]
    x2_0 = x0[:, 1:2]
    x1 = x1_0 * np.exp(p.mu * t)
    x2 = (x2_0 - c * x1_0 ** 2) * np.exp(p.lam * t) + c * x1_0 ** 2 * np.exp(2.0 * p.mu * t)
    return np.stack([x1, x2], axis=-1)


def gen_poly_manifold(p=None):
    """``count`` trajectories sampled at ``t = k dt``, ``k = 0..m``.

    Initial states are uniform in ``[low, high]^2`` from
    ``numpy.random.default_rng(seed)``.
    """
    p = PolyManifoldParams() if p is None else p
    rng = np.random.default_rng(p.seed)
    x0 = rng.uniform(p.low, p.high, size=(p.count, 2))
    return poly_manifold_states(p, x0, p.dt * np.arange(p.m + 1))


def poly_manifold_embedding(X):
    """Observables ``(x1, x2, x1^2)`` of states ``... x 2``."""
    X = np.asarray(X, dtype=float)
    return np.concatenate([X, X[..., :1] ** 2], axis=-1)


def poly_manifold_generator(p):
    """Continuous generator of the embedded dynamics."""
    return np.array([
        [p.mu, 0.0, 0.0],
        [0.0, p.lam, -p.lam],
        [0.0, 0.0, 2.0 * p.mu],
    ])


def poly_manifold_operator(p):
    """Discrete one-step operator ``expm(dt * generator)`` of the embedding."""
    return scipy.linalg.expm(p.dt * poly_manifold_generator(p))


def split_trajectories(trajectories, counts, seed=0):
    """Shuffle trajectories and cut them into consecutive splits of ``counts``."""
    trajectories = np.asarray(trajectories)
    if sum(counts) > trajectories.shape[0]:
        raise InvalidParams(f"split sizes {list(counts)} exceed {trajectories.shape[0]} trajectories.")
    order = np.random.default_rng(seed).permutation(trajectories.shape[0])
    bounds = np.cumsum([0, *counts])
    return [trajectories[order[bounds[k]:bounds[k + 1]]] for k in range(len(counts))]


__all__ = [
    "PolyManifoldParams",
    "gen_linear_system",
    "gen_poly_manifold",
    "poly_manifold_states",
    "poly_manifold_embedding",
    "poly_manifold_generator",
    "poly_manifold_operator",
    "split_trajectories",
]
