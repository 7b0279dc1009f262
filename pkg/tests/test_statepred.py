#!/usr/bin/env python

"""Tests for `koopnet.StatePred`: the Koopman fit, evolution and the StatePred model."""

import unittest
import warnings

import numpy as np
from scipy.linalg import fractional_matrix_power

from koopnet.constant import EIGVEC_EXACT, EIGVEC_PROJECTED, SPLIT_TEST, SPLIT_TRAIN, STATS_COLUMNS
from koopnet.core import (
    DegenerateIndexes,
    ImaginaryResidualWarning,
    NotTrained,
    NoTestSplit,
    RankTooLarge,
    ZeroEigenvalueWarning,
)
from koopnet.data import SnapshotDataset
from koopnet.datagen import gen_linear_system
from koopnet.StatePred import StatePred, StatePredConfig, evolve, koopman_fit
from tests.gradcheck import params_gradient_error


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


A_DAMPED = np.diag([0.9, 0.8]) @ rotation(0.1)


def linear_snapshots(A, y0, n):
    """``d x n`` matrix of ``A^i y0`` columns."""
    return gen_linear_system(A, y0, n - 1)[0].T


class TestKoopmanFit(unittest.TestCase):

    def setUp(self):
        self.y0 = np.array([1.0, 0.5])
        self.Y = linear_snapshots(A_DAMPED, self.y0, 50)

    def test_recovers_eigenvalues(self):
        ke = koopman_fit(self.Y, rank=2)
        np.testing.assert_allclose(np.sort_complex(ke.lam), np.sort_complex(np.linalg.eigvals(A_DAMPED)), atol=1e-8)
        np.testing.assert_allclose(np.exp(ke.omega), ke.lam, atol=1e-12)
        self.assertEqual(ke.rank, 2)

    def test_integer_evolution_matches_powers(self):
        ke = koopman_fit(self.Y, rank=2)
        for i in range(0, 60, 7):
            expected = np.linalg.matrix_power(A_DAMPED, i) @ self.y0
            np.testing.assert_allclose(evolve(ke, i), expected, atol=1e-8)
        columns = evolve(ke, [0, 1, 2])
        self.assertEqual(columns.shape, (2, 3))

    def test_fractional_index(self):
        ke = koopman_fit(np.array([[1.0, 4.0, 16.0, 64.0]]), rank=1)
        self.assertAlmostEqual(evolve(ke, 0.5)[0], 2.0, delta=1e-10)
        self.assertAlmostEqual(evolve(ke, -1)[0], 0.25, delta=1e-10)

    def test_exact_and_projected_agree(self):
        projected = koopman_fit(self.Y, rank=2, eigvec_mode=EIGVEC_PROJECTED)
        exact = koopman_fit(self.Y, rank=2, eigvec_mode=EIGVEC_EXACT)
        steps = np.arange(21)
        np.testing.assert_allclose(evolve(exact, steps), evolve(projected, steps), atol=1e-6)

    def test_non_contiguous_indexes(self):
        keep = [0, 1, 3, 4, 7, 8]
        ke = koopman_fit(self.Y[:, keep], rank=2, indexes=keep)
        np.testing.assert_allclose(np.sort_complex(ke.lam), np.sort_complex(np.linalg.eigvals(A_DAMPED)), atol=1e-8)

    def test_no_consecutive_pairs(self):
        with self.assertRaises(DegenerateIndexes):
            koopman_fit(self.Y[:, [0, 2, 4]], rank=1, indexes=[0, 2, 4])

    def test_rank_above_effective_rank(self):
        Y = np.outer([1.0, 2.0, 3.0], 0.5 ** np.arange(6))
        with self.assertRaises(RankTooLarge):
            koopman_fit(Y, rank=2)

    def test_zero_eigenvalue_falls_back_to_projected(self):
        Y = linear_snapshots(np.diag([0.5, 0.0]), np.array([1.0, 1.0]), 6)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            warnings.simplefilter("always", ZeroEigenvalueWarning)
            with self.assertWarns(ZeroEigenvalueWarning):
                ke = koopman_fit(Y, rank=2, eigvec_mode=EIGVEC_EXACT)
        self.assertEqual(ke.W.shape, (2, 2))
        self.assertTrue(np.all(np.isfinite(ke.W)))

    def test_imaginary_residual_warning(self):
        ke = koopman_fit(self.Y, rank=2)
        broken = type(ke)(W=ke.W, lam=ke.lam, omega=ke.omega, b=ke.b * 1j)
        with self.assertWarns(ImaginaryResidualWarning):
            evolve(broken, 3)


def toy_dataset(n=12, with_test=False):
    states = gen_linear_system(A_DAMPED, [1.0, 0.5], n - 1)[0]
    t = np.arange(n, dtype=float)
    if with_test:
        return SnapshotDataset(states, t, Xte=states, tte=t)
    return SnapshotDataset(states[:-3], t[:-3], states[-3:], t[-3:])


class TestStatePred(unittest.TestCase):

    def setUp(self):
        self.config = StatePredConfig(rank=2, encoded_size=3, encoder_hidden_layers=(6,), numepochs=4, lr=1e-2, seed=1)

    def test_config_validation(self):
        with self.assertRaises(RankTooLarge):
            StatePredConfig(rank=4, encoded_size=3)
        with self.assertRaises(ValueError):
            StatePredConfig(rank=1, encoded_size=3, lr=0.0)
        with self.assertRaises(ValueError):
            StatePredConfig(rank=1, encoded_size=3, eigvec_mode="other")
        self.assertEqual(self.config.replace(numepochs=7).numepochs, 7)
        self.assertEqual(StatePredConfig(rank=1, encoded_size=2, lr="1e-3").lr, 1e-3)

    def test_rank_limited_by_training_snapshots(self):
        ds = SnapshotDataset(np.ones((3, 2)) * [[1.0], [2.0], [3.0]], [0.0, 1.0, 2.0])
        with self.assertRaises(RankTooLarge):
            StatePred(ds, StatePredConfig(rank=3, encoded_size=3))

    def test_untrained(self):
        model = StatePred(toy_dataset(), self.config)
        with self.assertRaises(NotTrained):
            model.predict_new([1.0])
        with self.assertRaises(NotTrained):
            model.get_eigen()

    def test_train_records_every_epoch(self):
        model = StatePred(toy_dataset(), self.config)
        stats = model.train_net()
        frame = stats.to_frame()
        self.assertEqual(len(frame), 4)
        self.assertEqual(list(frame.columns), list(STATS_COLUMNS))
        self.assertEqual(list(frame["epoch"]), [1, 2, 3, 4])
        self.assertTrue(np.isfinite(frame["pred_anae_va"]).all())
        self.assertEqual(model.get_eigen().rank, 2)
        with self.assertRaises(NoTestSplit):
            model.test_net()

    def test_same_seed_same_run(self):
        first = StatePred(toy_dataset(), self.config).train_net().to_frame()
        second = StatePred(toy_dataset(), self.config).train_net().to_frame()
        self.assertTrue(first.equals(second))

    def test_test_split_equal_to_train(self):
        model = StatePred(toy_dataset(with_test=True), self.config)
        model.train_net(numepochs=2)
        test = model.test_net()
        train = model.evaluate(SPLIT_TRAIN)
        self.assertAlmostEqual(test.pred_anae, train.pred_anae, places=10)
        self.assertAlmostEqual(test.recon_loss, train.recon_loss, places=12)
        self.assertIs(model.stats.test, test)
        self.assertEqual(model.evaluate(SPLIT_TEST), test)

    def test_predict_new_shapes(self):
        model = StatePred(toy_dataset(), self.config)
        model.train_net(numepochs=1)
        self.assertEqual(model.predict_new([3.75, 21]).shape, (2, 2))
        self.assertEqual(model.predict_new(5.0).shape, (1, 2))

    def test_zero_epochs_fits_eigen(self):
        model = StatePred(toy_dataset(), self.config)
        stats = model.train_net(numepochs=0)
        self.assertEqual(len(stats), 0)
        self.assertEqual(model.get_eigen().rank, 2)

    def test_detached_eigendecomposition_still_trains(self):
        config = self.config.replace(detach_eig_gradient=True)
        model = StatePred(toy_dataset(), config)
        _, grads = model.loss_and_gradients()
        for name in ("encoder.0.weight", "encoder.1.weight"):
            self.assertGreater(np.linalg.norm(grads[name]), 0.0, name)
        attached = StatePred(toy_dataset(), self.config).loss_and_gradients()[1]
        self.assertFalse(np.allclose(grads["encoder.0.weight"], attached["encoder.0.weight"]))
        frame = model.train_net().to_frame()
        self.assertTrue(np.isfinite(frame[["total_loss_tr", "pred_anae_tr", "pred_anae_va"]]).all().all())

    def test_imaginary_residual_is_recorded(self):
        model = StatePred(toy_dataset(), self.config)
        model.train_net(numepochs=1)
        self.assertLess(model.max_imag_residual, 1e-8)
        ke = model.eigen
        model.eigen = type(ke)(W=ke.W, lam=ke.lam, omega=ke.omega, b=ke.b * 1j)
        with self.assertWarns(ImaginaryResidualWarning):
            model.predict_new([2.0])
        self.assertGreater(model.max_imag_residual, 1e-4)

    def test_pipeline_gradient(self):
        states = np.array([[1.0, 0.2], [0.7, 0.5], [0.3, 0.6]])
        ds = SnapshotDataset(states, [0.0, 1.0, 2.0])
        model = StatePred(ds, StatePredConfig(rank=1, encoded_size=2, encoder_hidden_layers=(3,), seed=4))
        self.assertLess(params_gradient_error(model.loss_and_gradients, model.params), 1e-4)


A_ROTATION = 0.98 * rotation(0.1)


class TestRotationConvergence(unittest.TestCase):
    """50 snapshots of a slowly decaying rotation with a linear two-state encoding.

    Without biases or scaling the encoded states stay exactly linear, so the
    Koopman fit is exact and training only has to invert the encoder.
    """

    @classmethod
    def setUpClass(cls):
        states = gen_linear_system(A_ROTATION, [1.0, 0.5], 59)[0]
        t = np.arange(60, dtype=float)
        cls.states = states
        dataset = SnapshotDataset(states[:50], t[:50], Xte=states[50:], tte=t[50:])
        config = StatePredConfig(rank=2, encoded_size=2, use_bias=False, scale=False, Kreg=0.0, numepochs=500, lr=1e-2,
                                 seed=0)
        cls.model = StatePred(dataset, config)
        cls.stats = cls.model.train_net()

    def test_training_prediction_error(self):
        self.assertLess(self.stats.final.train.pred_anae, 2.0)

    def test_held_out_prediction_error(self):
        self.assertLess(self.model.test_net().pred_anae, 2.0)

    def test_training_index_reproduces_trained_prediction(self):
        parts = self.model._forward(self.model.params, SPLIT_TRAIN, requires_grad=False)
        trained = self.model.scaler.inverse(parts["X_pred"].value.T)
        predicted = self.model.predict_new(np.arange(1.0, 50.0))
        np.testing.assert_allclose(predicted, trained, rtol=1e-12, atol=1e-12)

    def test_fractional_and_negative_indexes_follow_the_eigen_data(self):
        ke = self.model.get_eigen()
        decoder = self.model.params["decoder.0.weight"]
        for t in (1.5, -2.0, 52.25):
            np.testing.assert_allclose(self.model.predict_new(t)[0], decoder @ evolve(ke, t), atol=1e-6)

    def test_fractional_and_negative_indexes_follow_the_system(self):
        x0 = self.states[0]
        for t in (1.5, -2.0):
            expected = np.real(fractional_matrix_power(A_ROTATION, t)) @ x0
            error = np.linalg.norm(self.model.predict_new(t)[0] - expected) / np.linalg.norm(expected)
            self.assertLess(error, 0.02)

    def test_no_imaginary_residual(self):
        self.model.predict_new([1.5, -2.0, 70.0])
        self.assertLess(self.model.max_imag_residual, 1e-8)


if __name__ == "__main__":
    unittest.main()
