#!/usr/bin/env python

"""Tests for `koopnet.datagen`."""

import unittest

import numpy as np

from koopnet import datagen
from koopnet.core import InvalidParams, ShapeMismatch
from koopnet.StatePred import koopman_fit


def rk4(p, x0, t_end, steps):
    """Fixed-step integration of the polynomial-manifold system."""

    def rhs(x):
        return np.stack([p.mu * x[:, 0], p.lam * (x[:, 1] - x[:, 0] ** 2)], axis=1)

    h = t_end / steps
    x = np.array(x0, dtype=float)
    for _ in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


class TestLinearSystem(unittest.TestCase):

    def test_powers(self):
        A = np.array([[0.5, 0.2], [-0.1, 1.1]])
        x0 = np.array([[1.0, 0.0], [0.3, -2.0]])
        traj = datagen.gen_linear_system(A, x0, 4)
        self.assertEqual(traj.shape, (2, 5, 2))
        for k in range(5):
            np.testing.assert_allclose(traj[:, k], x0 @ np.linalg.matrix_power(A, k).T, atol=1e-14)

    def test_single_initial_state(self):
        self.assertEqual(datagen.gen_linear_system(np.eye(3), [1.0, 2.0, 3.0], 2).shape, (1, 3, 3))

    def test_invalid(self):
        with self.assertRaises(InvalidParams):
            datagen.gen_linear_system(np.eye(2), [1.0, 1.0], 0)
        with self.assertRaises(ShapeMismatch):
            datagen.gen_linear_system(np.ones((2, 3)), [1.0, 1.0], 2)
        with self.assertRaises(ShapeMismatch):
            datagen.gen_linear_system(np.eye(2), [1.0, 1.0, 1.0], 2)


class TestPolyManifold(unittest.TestCase):

    def setUp(self):
        self.p = datagen.PolyManifoldParams(dt=0.02, m=10, count=4, seed=1)

    def test_params_validation(self):
        with self.assertRaises(InvalidParams):
            datagen.PolyManifoldParams(mu=-2.0, lam=-1.0)
        with self.assertRaises(InvalidParams):
            datagen.PolyManifoldParams(mu=0.1)
        with self.assertRaises(InvalidParams):
            datagen.PolyManifoldParams(dt=0.0)
        with self.assertRaises(InvalidParams):
            datagen.PolyManifoldParams(count=0)
        with self.assertRaises(InvalidParams):
            datagen.PolyManifoldParams(low=1.0, high=1.0)

    def test_shape_box_and_seed(self):
        traj = datagen.gen_poly_manifold(self.p)
        self.assertEqual(traj.shape, (4, 11, 2))
        self.assertTrue(np.all(traj[:, 0] >= self.p.low) and np.all(traj[:, 0] <= self.p.high))
        np.testing.assert_array_equal(traj, datagen.gen_poly_manifold(self.p))
        self.assertFalse(np.array_equal(traj, datagen.gen_poly_manifold(self.p.replace(seed=2))))

    def test_matches_numerical_integration(self):
        traj = datagen.gen_poly_manifold(self.p)
        t_end = self.p.m * self.p.dt
        integrated = rk4(self.p, traj[:, 0], t_end, self.p.m * 1000)
        np.testing.assert_allclose(traj[:, -1], integrated, atol=1e-9)

    def test_slow_manifold_is_invariant(self):
        x1 = np.array([0.4, -0.3])
        x0 = np.stack([x1, self.p.manifold_coefficient * x1 ** 2], axis=1)
        traj = datagen.poly_manifold_states(self.p, x0, [0.0, 0.5, 3.0])
        np.testing.assert_allclose(traj[..., 1], self.p.manifold_coefficient * traj[..., 0] ** 2, atol=1e-15)

    def test_embedding_evolves_linearly(self):
        Z = datagen.poly_manifold_embedding(datagen.gen_poly_manifold(self.p))
        self.assertEqual(Z.shape, (4, 11, 3))
        K = datagen.poly_manifold_operator(self.p)
        residual = Z[:, 1:] - Z[:, :-1] @ K.T
        self.assertLess(np.abs(residual).max(), 1e-9)

    def test_koopman_fit_recovers_spectrum(self):
        p = datagen.PolyManifoldParams(dt=0.1, m=30)
        Z = datagen.poly_manifold_embedding(datagen.poly_manifold_states(p, [[0.4, 0.3]], p.dt * np.arange(p.m + 1)))[0]
        ke = koopman_fit(Z.T, rank=3)
        expected = np.exp(p.dt * np.array([p.mu, p.lam, 2.0 * p.mu]))
        np.testing.assert_allclose(np.sort(ke.lam.real), np.sort(expected), atol=1e-6)
        np.testing.assert_allclose(ke.lam.imag, 0.0, atol=1e-6)


class TestSplit(unittest.TestCase):

    def test_disjoint_splits(self):
        traj = np.arange(10, dtype=float).reshape(10, 1, 1) * np.ones((1, 2, 1))
        train, val, test = datagen.split_trajectories(traj, [6, 2, 2], seed=4)
        self.assertEqual((len(train), len(val), len(test)), (6, 2, 2))
        ids = np.concatenate([train[:, 0, 0], val[:, 0, 0], test[:, 0, 0]])
        self.assertEqual(sorted(ids.tolist()), list(range(10)))
        again = datagen.split_trajectories(traj, [6, 2, 2], seed=4)
        np.testing.assert_array_equal(again[0], train)

    def test_too_many(self):
        with self.assertRaises(InvalidParams):
            datagen.split_trajectories(np.ones((3, 2, 1)), [2, 2])


if __name__ == "__main__":
    unittest.main()
