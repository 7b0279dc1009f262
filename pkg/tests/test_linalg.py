#!/usr/bin/env python

"""Tests for `koopnet.linalg`."""

import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from koopnet import linalg
from koopnet.core import DefectiveMatrix, RankTooLarge, ScalarKindMismatch, ShapeMismatch


class TestMatmul(unittest.TestCase):

    def test_shapes_must_align(self):
        with self.assertRaises(ShapeMismatch):
            linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_no_implicit_complex_promotion(self):
        with self.assertRaises(ScalarKindMismatch):
            linalg.matmul(np.ones((2, 2)), np.ones((2, 2), dtype=complex))
        out = linalg.matmul(linalg.to_complex(np.eye(2)), np.ones((2, 1), dtype=complex))
        self.assertTrue(np.iscomplexobj(out))


class TestSvd(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(3)

    def test_full_rank_reconstruction(self):
        a = self.rng.standard_normal((6, 4))
        result = linalg.svd_truncated(a, 4)
        self.assertEqual(result.effective_rank, 4)
        np.testing.assert_allclose(result.reconstruct(), a, atol=1e-12)
        np.testing.assert_allclose(result.U.T @ result.U, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(result.V.T @ result.V, np.eye(4), atol=1e-12)
        self.assertTrue(np.all(np.diff(result.S) <= 0))

    def test_rank_above_min_dimension(self):
        with self.assertRaises(RankTooLarge):
            linalg.svd_truncated(np.ones((3, 5)), 4)

    def test_relative_cutoff_drops_null_directions(self):
        a = np.outer(self.rng.standard_normal(5), self.rng.standard_normal(4))
        result = linalg.svd_truncated(a, 3)
        self.assertEqual(result.effective_rank, 1)
        self.assertEqual(result.U.shape, (5, 1))
        np.testing.assert_allclose(result.reconstruct(), a, atol=1e-12)

    def test_deterministic_signs(self):
        a = self.rng.standard_normal((5, 3))
        U, _, _ = linalg.thin_svd(a)
        pivots = U[np.argmax(np.abs(U), axis=0), np.arange(3)]
        self.assertTrue(np.all(pivots > 0))
        U2, _, _ = linalg.thin_svd(-a)
        np.testing.assert_allclose(U2, U, atol=1e-12)

    def test_complex_input_rejected(self):
        with self.assertRaises(ScalarKindMismatch):
            linalg.svd_truncated(np.ones((2, 2), dtype=complex), 1)


class TestEig(unittest.TestCase):

    def test_sorted_by_magnitude(self):
        result = linalg.eig(np.diag([3.0, 1.0, -2.0]))
        np.testing.assert_allclose(result.eigenvalues, [3.0, -2.0, 1.0])

    def test_conjugate_pair_sorted_by_angle(self):
        theta = 0.3
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        result = linalg.eig(R)
        self.assertLess(result.eigenvalues[0].imag, 0)
        self.assertGreater(result.eigenvalues[1].imag, 0)
        np.testing.assert_allclose(R @ result.W, result.W * result.eigenvalues, atol=1e-12)

    def test_unit_norm_and_phase(self):
        a = np.random.default_rng(5).standard_normal((4, 4))
        W = linalg.eig(a).W
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0)
        for k in range(4):
            first = W[np.flatnonzero(np.abs(W[:, k]) > 1e-12)[0], k]
            self.assertAlmostEqual(first.imag, 0.0, places=12)
            self.assertGreater(first.real, 0.0)

    def test_defective_matrix(self):
        with self.assertRaises(DefectiveMatrix):
            linalg.eig(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_square_required(self):
        with self.assertRaises(ShapeMismatch):
            linalg.eig(np.ones((2, 3)))


class TestPinv(unittest.TestCase):

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2 ** 16), st.integers(1, 6), st.integers(1, 6), st.booleans())
    def test_penrose_conditions(self, seed, rows, cols, complex_input):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((rows, cols))
        if complex_input:
            a = a + 1j * rng.standard_normal((rows, cols))
        p = linalg.pinv(a)
        np.testing.assert_allclose(a @ p @ a, a, atol=1e-9)
        np.testing.assert_allclose(p @ a @ p, p, atol=1e-9)
        np.testing.assert_allclose((a @ p).conj().T, a @ p, atol=1e-9)
        np.testing.assert_allclose((p @ a).conj().T, p @ a, atol=1e-9)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(linalg.pinv(np.zeros((3, 2))), np.zeros((2, 3)))


class TestMatexp(unittest.TestCase):

    def test_fractional_power(self):
        out = linalg.matexp_eigs(np.log([4.0 + 0j]), 0.5)
        np.testing.assert_allclose(out, [2.0], atol=1e-14)


if __name__ == "__main__":
    unittest.main()
