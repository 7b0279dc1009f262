"""MLP encoder/decoder, the linear Koopman layer and the Adam optimizer.

Parameters are kept as an ordered ``dict`` of plain arrays named
``encoder.<k>.weight``, ``encoder.<k>.bias``, ``decoder.<k>.weight`` ... and
``koopman.weight``.  A forward pass binds them onto a :class:`~koopnet.autodiff.Tape`
with :func:`bind`; states are columns (``features x batch``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .constant import ACT_TANH, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, validate_activation
from .core import ShapeMismatch, SpecMismatch, validate_layer_sizes, validate_positive_int

ENCODER = "encoder"
DECODER = "decoder"
KOOPMAN = "koopman"


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected network ``input -> hidden... -> output``.

    Hidden layers use ``activation``; the output layer is affine.
    """

    input_size: int
    hidden_layer_sizes: tuple = ()
    output_size: int = 1
    activation: str = ACT_TANH
    use_bias: bool = True

    def __post_init__(self):
        validate_positive_int(self.input_size, "input_size")
        validate_positive_int(self.output_size, "output_size")
        object.__setattr__(self, "hidden_layer_sizes", validate_layer_sizes(self.hidden_layer_sizes, "hidden_layer_sizes"))
        validate_activation(self.activation)

    @property
    def layer_sizes(self):
        return (self.input_size, *self.hidden_layer_sizes, self.output_size)

    @property
    def num_layers(self):
        return len(self.layer_sizes) - 1

    def mirrored(self):
        """Spec of the network mapping ``output_size`` back to ``input_size``."""
        return MlpSpec(
            input_size=self.output_size,
            hidden_layer_sizes=tuple(reversed(self.hidden_layer_sizes)),
            output_size=self.input_size,
            activation=self.activation,
            use_bias=self.use_bias,
        )


def autoencoder_specs(state_dim, encoded_size, encoder_hidden_layers=(), decoder_hidden_layers=None,
                      activation=ACT_TANH, use_bias=True):
    """Encoder and decoder specs; the decoder mirrors the encoder unless given."""
    encoder = MlpSpec(state_dim, tuple(encoder_hidden_layers), encoded_size, activation, use_bias)
    if decoder_hidden_layers is None:
        return encoder, encoder.mirrored()
    return encoder, MlpSpec(encoded_size, tuple(decoder_hidden_layers), state_dim, activation, use_bias)


def xavier_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(spec, rng, prefix):
    params = {}
    sizes = spec.layer_sizes
    for k in range(spec.num_layers):
        params[f"{prefix}.{k}.weight"] = xavier_uniform(rng, sizes[k + 1], sizes[k])
        if spec.use_bias:
            params[f"{prefix}.{k}.bias"] = np.zeros((sizes[k + 1], 1))
    return params


def build_autoencoder(encoder, decoder, seed):
    """Initialize encoder and decoder parameters.

    Weights are Xavier-uniform from ``numpy.random.default_rng(seed)``
    (encoder first), biases are zero.

    Raises
    ------
    SpecMismatch
        If the encoder output is not the decoder input, or the decoder output
        is not the encoder input.
    """
    if encoder.output_size != decoder.input_size:
        raise SpecMismatch(
            f"encoder output ({encoder.output_size}) must equal decoder input ({decoder.input_size})."
        )
    if encoder.input_size != decoder.output_size:
        raise SpecMismatch(
            f"decoder output ({decoder.output_size}) must equal encoder input ({encoder.input_size})."
        )
    rng = np.random.default_rng(seed)
    params = init_mlp(encoder, rng, ENCODER)
    params.update(init_mlp(decoder, rng, DECODER))
    return params


def init_koopman_layer(encoded_size, rng, noise=0.01):
    """Identity plus ``noise``-scaled Xavier perturbation."""
    return {f"{KOOPMAN}.weight": np.eye(encoded_size) + noise * xavier_uniform(rng, encoded_size, encoded_size)}


def bind(tape, params, requires_grad=True):
    """Register every parameter array as a leaf of ``tape``."""
    return {name: tape.leaf(value, requires_grad=requires_grad, name=name) for name, value in params.items()}


def weight_names(params, prefixes=(ENCODER, DECODER)):
    """Names of the weight matrices (biases excluded) under ``prefixes``."""
    return [name for name in params if name.endswith(".weight") and name.split(".", 1)[0] in prefixes]


def mlp_forward(bound, spec, prefix, X):
    if X.shape[0] != spec.input_size:
        raise ShapeMismatch(f"{prefix} expects {spec.input_size} input rows; got {X.shape[0]}.")
    out = X
    for k in range(spec.num_layers):
        out = ad.matmul(bound[f"{prefix}.{k}.weight"], out)
        if spec.use_bias:
            out = ad.add(out, bound[f"{prefix}.{k}.bias"])
        if k < spec.num_layers - 1:
            out = ad.elementwise_activation(out, spec.activation)
    return out


def encode(bound, spec, X):
    """``y = g(x)`` for a ``state_dim x batch`` node."""
    return mlp_forward(bound, spec, ENCODER, X)


def decode(bound, spec, Y):
    """``x = g^-1(y)`` for an ``encoded_size x batch`` node."""
    return mlp_forward(bound, spec, DECODER, Y)


class LinearKoopmanLayer:
    """Square, bias-free, activation-free layer ``y -> K y``."""

    weight_name = f"{KOOPMAN}.weight"

    def __init__(self, encoded_size):
        self.encoded_size = validate_positive_int(encoded_size, "encoded_size")

    def weight(self, bound):
        return bound[self.weight_name]

    def __call__(self, bound, Y):
        K = self.weight(bound)
        if K.shape != (self.encoded_size, self.encoded_size):
            raise ShapeMismatch(f"Koopman weight has shape {K.shape}; expected {(self.encoded_size,) * 2}.")
        return ad.matmul(K, Y)

    def power(self, params, n):
        """``K^n`` as a new array."""
        return np.linalg.matrix_power(params[self.weight_name], n).copy()


@dataclass
class OptimizerState:
    """Adam moments keyed like the parameter dict."""

    lr: float
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_init(params, lr=1e-3):
    return OptimizerState(
        lr=float(lr),
        m={name: np.zeros_like(value) for name, value in params.items()},
        v={name: np.zeros_like(value) for name, value in params.items()},
    )


def adam_step(opt, params, grads):
    """One Adam update; returns new parameter arrays and advances ``opt``.

    Parameters without an entry in ``grads`` are left unchanged.
    """
    opt.step += 1
    bias1 = 1.0 - ADAM_BETA1 ** opt.step
    bias2 = 1.0 - ADAM_BETA2 ** opt.step
    updated = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = value
            continue
        if grad.shape != value.shape:
            raise ShapeMismatch(f"gradient of {name} has shape {grad.shape}; parameter is {value.shape}.")
        opt.m[name] = ADAM_BETA1 * opt.m[name] + (1.0 - ADAM_BETA1) * grad
        opt.v[name] = ADAM_BETA2 * opt.v[name] + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = opt.m[name] / bias1
        v_hat = opt.v[name] / bias2
        updated[name] = value - opt.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return updated


def global_norm(grads):
    return float(np.sqrt(sum(np.sum(grad * grad) for grad in grads.values())))


def clip_gradients(grads, max_norm):
    """Rescale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads
    factor = max_norm / norm
    return {name: grad * factor for name, grad in grads.items()}


__all__ = [
    "MlpSpec",
    "LinearKoopmanLayer",
    "OptimizerState",
    "autoencoder_specs",
    "build_autoencoder",
    "init_koopman_layer",
    "bind",
    "weight_names",
    "encode",
    "decode",
    "adam_init",
    "adam_step",
    "clip_gradients",
    "global_norm",
]
