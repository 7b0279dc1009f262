#!/usr/bin/env python

"""Tests for `koopnet.metrics`."""

import math
import os
import tempfile
import unittest

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from koopnet import autodiff as ad
from koopnet import metrics
from koopnet.constant import MODEL_STATEPRED, MODEL_TRAJPRED, SORT_KEYS, STATS_COLUMNS
from koopnet.core import AllReferenceZero, ParseError, ShapeMismatch

FINITE = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _metrics(value, total=None):
    return metrics.EpochMetrics(
        recon_loss=value,
        recon_anae=10 * value,
        lin_loss=value + 1,
        lin_anae=10 * value + 1,
        pred_loss=value + 2,
        pred_anae=10 * value + 2,
        total_loss=value + 3 if total is None else total,
    )


class TestAnae(unittest.TestCase):

    def test_worked_example(self):
        p = [-0.1, 0.2, 0.0, 100.0, 200.0, 300.0]
        q = [-0.11, 0.15, 0.01, 105.0, 210.0, 285.0]
        self.assertAlmostEqual(metrics.anae(p, q), 10.0, delta=1e-9)

    def test_all_zero_reference(self):
        with self.assertRaises(AllReferenceZero):
            metrics.anae([0.0, 0.0], [1.0, 2.0])
        self.assertTrue(math.isnan(metrics.anae_or_nan([0.0], [1.0])))

    def test_epsilon_threshold(self):
        p = [1e-9, 1.0]
        q = [1.0, 1.5]
        self.assertGreater(metrics.anae(p, q), 1e6)
        self.assertAlmostEqual(metrics.anae(p, q, eps=1e-6), 50.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            metrics.anae([1.0, 2.0], [1.0])

    def test_perfect_prediction(self):
        self.assertEqual(metrics.anae([[1.0, -2.0], [3.0, 4.0]], [[1.0, -2.0], [3.0, 4.0]]), 0.0)

    @settings(deadline=None)
    @given(st.lists(st.tuples(FINITE, FINITE), min_size=1, max_size=20), st.floats(0.01, 100.0))
    def test_scale_invariance(self, pairs, c):
        p = np.array([pair[0] for pair in pairs])
        q = np.array([pair[1] for pair in pairs])
        assume(np.any(np.abs(p) > 1e-3))
        p[np.abs(p) <= 1e-3] = 0.0
        self.assertAlmostEqual(metrics.anae(c * p, c * q), metrics.anae(p, q), delta=1e-6 * (1 + metrics.anae(p, q)))

    @settings(deadline=None)
    @given(st.lists(st.tuples(FINITE, FINITE), min_size=1, max_size=20))
    def test_ignores_zero_references(self, pairs):
        p = np.array([pair[0] for pair in pairs])
        q = np.array([pair[1] for pair in pairs])
        assume(np.any(p != 0))
        padded_p = np.concatenate([p, [0.0, 0.0]])
        padded_q = np.concatenate([q, [5.0, -7.0]])
        self.assertEqual(metrics.anae(padded_p, padded_q), metrics.anae(p, q))


class TestLoss(unittest.TestCase):

    def test_mse(self):
        self.assertEqual(metrics.mse([[1.0, 2.0]], [[1.0, 4.0]]), 2.0)
        with self.assertRaises(ShapeMismatch):
            metrics.mse([1.0], [1.0, 2.0])

    def test_negative_weight(self):
        with self.assertRaises(ValueError):
            metrics.LossWeights(alpha=-1.0)

    def test_trajpred_ties_gamma_to_beta(self):
        weights = metrics.LossWeights.for_trajpred(alpha=0.1, beta=1e-5)
        self.assertEqual(weights.gamma, 1e-5)

    def test_total_loss(self):
        tape = ad.Tape()
        c = [tape.constant(v) for v in (1.0, 2.0, 3.0, 4.0, 5.0)]
        loss = metrics.total_loss(*c, metrics.LossWeights(alpha=0.5, beta=0.1, gamma=0.01))
        self.assertAlmostEqual(loss.value.item(), 2.0 + 0.5 * (1.0 + 3.0) + 0.1 * 4.0 + 0.01 * 5.0)

    def test_k_regularizers(self):
        tape = ad.Tape()
        K = tape.constant(np.array([[1.0, -2.0], [0.0, 3.0]]))
        self.assertEqual(metrics.k_regularizer(MODEL_STATEPRED, K).value.item(), 1.5)
        self.assertEqual(metrics.k_regularizer(MODEL_TRAJPRED, K).value.item(), 14.0)

    def test_autoencoder_decay(self):
        tape = ad.Tape()
        bound = {"encoder.0.weight": tape.constant(np.array([[1.0, 2.0]])), "decoder.0.weight": tape.constant(np.array([[3.0]]))}
        decay = metrics.autoencoder_decay(bound, list(bound))
        self.assertEqual(decay.value.item(), 14.0)


class TestRunStats(unittest.TestCase):

    def setUp(self):
        self.stats = metrics.RunStats()
        for epoch in range(1, 4):
            self.stats.append(metrics.EpochRecord(epoch, _metrics(float(epoch)), _metrics(epoch / 10.0)))

    def test_frame_layout(self):
        frame = self.stats.to_frame()
        self.assertEqual(list(frame.columns), list(STATS_COLUMNS))
        self.assertEqual(len(frame), 3)
        self.assertEqual(frame["pred_anae_va"].iloc[-1], 5.0)

    def test_summary(self):
        summary = self.stats.summary()
        self.assertEqual(set(summary), set(SORT_KEYS))
        self.assertEqual(summary["final_recon_loss_tr"], 3.0)
        self.assertAlmostEqual(summary["avg_pred_anae_va"], (3.0 + 4.0 + 5.0) / 3)

    def test_summary_without_validation(self):
        stats = metrics.RunStats([metrics.EpochRecord(1, _metrics(1.0))])
        summary = stats.summary()
        self.assertTrue(math.isnan(summary["avg_pred_anae_va"]))
        self.assertEqual(summary["avg_pred_anae_tr"], 12.0)

    def test_csv_round_trip(self):
        self.stats.append(metrics.EpochRecord(4, _metrics(0.1 + 0.2)))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "stats.csv")
            self.stats.to_csv(path)
            loaded = metrics.RunStats.from_csv(path)
        self.assertEqual(len(loaded), 4)
        self.assertIsNone(loaded.records[-1].val)
        self.assertEqual(loaded.records[-1].train.recon_loss, 0.1 + 0.2)
        self.assertEqual(loaded.records[0], self.stats.records[0])

    def test_bad_stats_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "stats.csv")
            with open(path, "w") as handle:
                handle.write("epoch,foo\n1,2\n")
            with self.assertRaises(ParseError):
                metrics.read_stats_frame(path)


if __name__ == "__main__":
    unittest.main()
