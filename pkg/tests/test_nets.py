#!/usr/bin/env python

"""Tests for `koopnet.nets`."""

import unittest

import numpy as np

from koopnet import autodiff as ad
from koopnet import nets
from koopnet.constant import ACT_RELU, ADAM_EPS
from koopnet.core import ShapeMismatch, SpecMismatch


class TestSpecs(unittest.TestCase):

    def test_mirrored_decoder(self):
        encoder, decoder = nets.autoencoder_specs(3, 5, (8, 6), activation=ACT_RELU)
        self.assertEqual(encoder.layer_sizes, (3, 8, 6, 5))
        self.assertEqual(decoder.layer_sizes, (5, 6, 8, 3))
        self.assertEqual(decoder.activation, ACT_RELU)

    def test_explicit_decoder(self):
        _, decoder = nets.autoencoder_specs(3, 5, (8,), (4, 4))
        self.assertEqual(decoder.layer_sizes, (5, 4, 4, 3))

    def test_invalid_sizes(self):
        with self.assertRaises(ValueError):
            nets.MlpSpec(0, (), 2)
        with self.assertRaises(ValueError):
            nets.MlpSpec(2, (3, 0), 2)
        with self.assertRaises(ValueError):
            nets.MlpSpec(2, (), 2, activation="softplus")


class TestBuild(unittest.TestCase):

    def setUp(self):
        self.encoder, self.decoder = nets.autoencoder_specs(2, 4, (6,))

    def test_spec_mismatch(self):
        with self.assertRaises(SpecMismatch):
            nets.build_autoencoder(self.encoder, nets.MlpSpec(3, (), 2), seed=0)
        with self.assertRaises(SpecMismatch):
            nets.build_autoencoder(self.encoder, nets.MlpSpec(4, (), 3), seed=0)

    def test_parameter_layout(self):
        params = nets.build_autoencoder(self.encoder, self.decoder, seed=0)
        self.assertEqual(
            list(params),
            [
                "encoder.0.weight", "encoder.0.bias", "encoder.1.weight", "encoder.1.bias",
                "decoder.0.weight", "decoder.0.bias", "decoder.1.weight", "decoder.1.bias",
            ],
        )
        self.assertEqual(params["encoder.0.weight"].shape, (6, 2))
        self.assertEqual(params["decoder.1.weight"].shape, (2, 6))
        self.assertEqual(params["encoder.0.bias"].shape, (6, 1))
        for name, value in params.items():
            if name.endswith(".bias"):
                np.testing.assert_array_equal(value, 0.0)

    def test_xavier_bounds_and_seed(self):
        params = nets.build_autoencoder(self.encoder, self.decoder, seed=7)
        again = nets.build_autoencoder(self.encoder, self.decoder, seed=7)
        for name in params:
            np.testing.assert_array_equal(params[name], again[name])
        W = params["encoder.0.weight"]
        self.assertTrue(np.all(np.abs(W) <= np.sqrt(6.0 / (2 + 6))))
        other = nets.build_autoencoder(self.encoder, self.decoder, seed=8)
        self.assertFalse(np.array_equal(W, other["encoder.0.weight"]))

    def test_no_bias(self):
        encoder, decoder = nets.autoencoder_specs(2, 4, (), use_bias=False)
        params = nets.build_autoencoder(encoder, decoder, seed=0)
        self.assertEqual(list(params), ["encoder.0.weight", "decoder.0.weight"])

    def test_weight_names(self):
        params = nets.build_autoencoder(self.encoder, self.decoder, seed=0)
        params.update(nets.init_koopman_layer(4, np.random.default_rng(0)))
        names = nets.weight_names(params)
        self.assertIn("encoder.1.weight", names)
        self.assertNotIn("encoder.1.bias", names)
        self.assertNotIn("koopman.weight", names)


class TestForward(unittest.TestCase):

    def test_encode_decode_shapes(self):
        encoder, decoder = nets.autoencoder_specs(2, 4, (6,))
        params = nets.build_autoencoder(encoder, decoder, seed=0)
        tape = ad.Tape()
        bound = nets.bind(tape, params)
        X = tape.constant(np.ones((2, 5)))
        Y = nets.encode(bound, encoder, X)
        self.assertEqual(Y.shape, (4, 5))
        self.assertEqual(nets.decode(bound, decoder, Y).shape, (2, 5))
        with self.assertRaises(ShapeMismatch):
            nets.encode(bound, encoder, tape.constant(np.ones((3, 5))))

    def test_output_layer_is_affine(self):
        encoder, decoder = nets.autoencoder_specs(1, 1, ())
        params = {"encoder.0.weight": np.array([[5.0]]), "encoder.0.bias": np.array([[1.0]])}
        tape = ad.Tape()
        Y = nets.encode(nets.bind(tape, params), encoder, tape.constant(np.array([[2.0]])))
        self.assertEqual(Y.value.item(), 11.0)

    def test_koopman_layer(self):
        rng = np.random.default_rng(1)
        params = nets.init_koopman_layer(3, rng)
        K = params["koopman.weight"]
        self.assertLess(np.abs(K - np.eye(3)).max(), 0.01 * np.sqrt(6.0 / 6.0) + 1e-15)
        layer = nets.LinearKoopmanLayer(3)
        tape = ad.Tape()
        Y = layer(nets.bind(tape, params), tape.constant(np.ones((3, 2))))
        np.testing.assert_allclose(Y.value, K @ np.ones((3, 2)))
        np.testing.assert_allclose(layer.power(params, 3), K @ K @ K)


class TestAdam(unittest.TestCase):

    def test_first_step_moves_by_lr(self):
        params = {"w": np.array([[1.0, -2.0]])}
        grads = {"w": np.array([[0.5, -3.0]])}
        opt = nets.adam_init(params, lr=0.1)
        updated = nets.adam_step(opt, params, grads)
        expected = params["w"] - 0.1 * grads["w"] / (np.abs(grads["w"]) + ADAM_EPS)
        np.testing.assert_allclose(updated["w"], expected, rtol=1e-12)
        self.assertEqual(opt.step, 1)
        np.testing.assert_array_equal(params["w"], [[1.0, -2.0]])

    def test_missing_gradient_leaves_parameter(self):
        params = {"a": np.ones((1, 1)), "b": np.ones((1, 1))}
        opt = nets.adam_init(params)
        updated = nets.adam_step(opt, params, {"a": np.ones((1, 1))})
        np.testing.assert_array_equal(updated["b"], params["b"])

    def test_gradient_shape_checked(self):
        params = {"a": np.ones((2, 1))}
        with self.assertRaises(ShapeMismatch):
            nets.adam_step(nets.adam_init(params), params, {"a": np.ones((1, 2))})

    def test_descends_quadratic(self):
        params = {"x": np.array([[3.0]])}
        opt = nets.adam_init(params, lr=0.1)
        for _ in range(200):
            params = nets.adam_step(opt, params, {"x": 2.0 * params["x"]})
        self.assertLess(abs(params["x"].item()), 1.0)


class TestClipping(unittest.TestCase):

    def test_global_norm_clip(self):
        grads = {"a": np.array([[3.0]]), "b": np.array([[4.0]])}
        clipped = nets.clip_gradients(grads, 1.0)
        self.assertAlmostEqual(nets.global_norm(clipped), 1.0)
        np.testing.assert_allclose(clipped["a"], [[0.6]])

    def test_no_clip(self):
        grads = {"a": np.array([[3.0]])}
        self.assertIs(nets.clip_gradients(grads, None), grads)
        self.assertIs(nets.clip_gradients(grads, 10.0), grads)


if __name__ == "__main__":
    unittest.main()
