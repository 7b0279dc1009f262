# import dependencies
import logging
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import autodiff as ad
from . import nets
from .constant import ACT_TANH, MODEL_TRAJPRED, SPLIT_TEST, SPLIT_TRAIN, SPLIT_VAL, validate_activation
from .core import (
    ConfigMixin,
    KoopnetError,
    NoTestSplit,
    TrainingError,
    validate_layer_sizes,
    validate_nonnegative,
    validate_positive_int,
)
from .data import Scaler
from .metrics import EpochMetrics, EpochRecord, LossWeights, RunStats, anae_or_nan, autoencoder_decay, k_regularizer, total_loss
from .utils import tools

logger = logging.getLogger(__name__)

KOOPMAN_WEIGHT = nets.LinearKoopmanLayer.weight_name


@dataclass(frozen=True)
class TrajPredConfig(ConfigMixin):
    """Hyperparameters of a :class:`TrajPred` run.

    The K-layer decay weight is tied to ``weight_decay``.
    """

    encoded_size: int
    encoder_hidden_layers: tuple = ()
    decoder_hidden_layers: tuple = None
    activation: str = ACT_TANH
    use_bias: bool = True
    numepochs: int = 10
    batch_size: int = 32
    decoder_loss_weight: float = 1e-2
    weight_decay: float = 0.0
    lr: float = 1e-3
    seed: int = 0
    scale: bool = True
    anae_eps: float = 0.0
    clip_grad_norm: float = None
    log_every: int = None

    def __post_init__(self):
        validate_positive_int(self.encoded_size, "encoded_size")
        object.__setattr__(self, "encoder_hidden_layers",
                           validate_layer_sizes(self.encoder_hidden_layers, "encoder_hidden_layers"))
        object.__setattr__(self, "decoder_hidden_layers",
                           validate_layer_sizes(self.decoder_hidden_layers, "decoder_hidden_layers"))
        validate_activation(self.activation)
        validate_positive_int(self.numepochs, "numepochs", minimum=0)
        validate_positive_int(self.batch_size, "batch_size")
        for name in ("decoder_loss_weight", "weight_decay", "anae_eps"):
            object.__setattr__(self, name, validate_nonnegative(getattr(self, name), name))
        object.__setattr__(self, "lr", validate_nonnegative(self.lr, "lr"))
        if self.lr == 0:
            raise ValueError("lr must be > 0.")
        validate_positive_int(self.seed, "seed", minimum=0)
        if self.clip_grad_norm is not None:
            object.__setattr__(self, "clip_grad_norm", validate_nonnegative(self.clip_grad_norm, "clip_grad_norm"))
        if self.clip_grad_norm == 0:
            raise ValueError("clip_grad_norm must be > 0 when given.")
        if self.log_every is not None:
            validate_positive_int(self.log_every, "log_every")

    @property
    def loss_weights(self):
        return LossWeights.for_trajpred(alpha=self.decoder_loss_weight, beta=self.weight_decay)


def rollout(K, Y0, m):
    """``[K y0, K^2 y0, ..., K^m y0]`` by ``m`` successive applications of ``K``.

    ``K`` is either a square node or a callable applying the linear map to a
    block of columns (a bound :class:`~koopnet.nets.LinearKoopmanLayer`).
    Only positive integer step counts exist: a linear layer cannot be
    applied backwards or a fractional number of times.
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise ValueError(f"rollout needs a positive integer number of steps; got {m!r}.")
    apply = K if callable(K) else partial(ad.matmul, K)
    steps = []
    Y = Y0
    for _ in range(int(m)):
        Y = apply(Y)
        steps.append(Y)
    return steps


def _step_major(X):
    """``B x (m+1) x d`` -> ``d x (m+1)B`` with the columns of step ``i`` at ``[iB, (i+1)B)``."""
    B, steps, d = X.shape
    return X.transpose(1, 0, 2).reshape(steps * B, d).T


def _from_step_major(values, B, steps):
    """Inverse of :func:`_step_major` for a ``d x steps*B`` block."""
    d = values.shape[0]
    return values.T.reshape(steps, B, d).transpose(1, 0, 2)


class TrajPred:
    """Trajectory prediction: autoencoder plus a linear Koopman layer.

    Parameters
    ----------
    dataset : TrajectoryDataset
        Equal-length trajectories.
    config : TrajPredConfig
        Hyperparameters.
    """

    kind = MODEL_TRAJPRED

    def __init__(self, dataset, config):
        self.dataset = dataset
        self.config = config
        self.encoder_spec, self.decoder_spec = nets.autoencoder_specs(
            dataset.state_dim,
            config.encoded_size,
            config.encoder_hidden_layers,
            config.decoder_hidden_layers,
            config.activation,
            config.use_bias,
        )
        self.params = nets.build_autoencoder(self.encoder_spec, self.decoder_spec, config.seed)
        rng = np.random.default_rng(tools.derive_seed(config.seed, 0))
        self.params.update(nets.init_koopman_layer(config.encoded_size, rng))
        self.koopman_layer = nets.LinearKoopmanLayer(config.encoded_size)
        self.scaler = Scaler.fit(dataset.Xtr) if config.scale else Scaler.identity(dataset.state_dim)
        self.num_steps = dataset.num_steps
        self.stats = RunStats()
        self.trained = False

    @classmethod
    def restore(cls, config, encoder_spec, decoder_spec, params, scaler, num_steps):
        """Rebuild a trained predictor without its training data."""
        model = cls.__new__(cls)
        model.dataset = None
        model.config = config
        model.encoder_spec = encoder_spec
        model.decoder_spec = decoder_spec
        model.params = dict(params)
        model.koopman_layer = nets.LinearKoopmanLayer(config.encoded_size)
        model.scaler = scaler
        model.num_steps = num_steps
        model.stats = RunStats()
        model.trained = True
        return model

    def _split(self, split):
        if split == SPLIT_TRAIN:
            return self.dataset.Xtr
        if split == SPLIT_VAL:
            return self.dataset.Xva
        if split == SPLIT_TEST:
            return self.dataset.Xte
        raise ValueError(f"split must be one of {[SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST]}; got {split!r}.")

    def _forward(self, params, trajectories, requires_grad):
        """Loss graph of a batch of trajectories in original units."""
        B, steps, _ = trajectories.shape
        m = steps - 1
        tape = ad.Tape()
        bound = nets.bind(tape, params, requires_grad=requires_grad)
        X = tape.constant(_step_major(self.scaler.transform(trajectories)))
        Y = nets.encode(bound, self.encoder_spec, X)
        Y_roll = ad.concat_columns(rollout(partial(self.koopman_layer, bound), ad.slice_columns(Y, slice(0, B)), m))
        Y_true = ad.slice_columns(Y, slice(B, None))
        X_recon = nets.decode(bound, self.decoder_spec, Y)
        X_pred = nets.decode(bound, self.decoder_spec, Y_roll)
        recon = ad.mse(X_recon, X)
        lin = ad.mse(Y_roll, Y_true)
        pred = ad.mse(X_pred, ad.slice_columns(X, slice(B, None)))
        ae = autoencoder_decay(bound, nets.weight_names(params))
        kreg = k_regularizer(MODEL_TRAJPRED, self.koopman_layer.weight(bound))
        loss = total_loss(recon, lin, pred, ae, kreg, self.config.loss_weights)
        return {
            "tape": tape,
            "bound": bound,
            "loss": loss,
            "recon": recon,
            "lin": lin,
            "pred": pred,
            "X_recon": X_recon,
            "X_pred": X_pred,
            "Y_roll": Y_roll,
            "Y_true": Y_true,
        }

    def _metrics(self, parts, trajectories):
        B, steps, _ = trajectories.shape
        eps = self.config.anae_eps
        recon = self.scaler.inverse(_from_step_major(parts["X_recon"].value, B, steps))
        pred = self.scaler.inverse(_from_step_major(parts["X_pred"].value, B, steps - 1))
        return EpochMetrics(
            recon_loss=parts["recon"].value.item(),
            recon_anae=anae_or_nan(trajectories, recon, eps),
            lin_loss=parts["lin"].value.item(),
            lin_anae=anae_or_nan(parts["Y_true"].value, parts["Y_roll"].value, eps),
            pred_loss=parts["pred"].value.item(),
            pred_anae=anae_or_nan(trajectories[:, 1:], pred, eps),
            total_loss=parts["loss"].value.item(),
        )

    def loss_and_gradients(self, trajectories, params=None):
        """Batch loss and its gradient with respect to every parameter."""
        params = self.params if params is None else params
        parts = self._forward(params, trajectories, requires_grad=True)
        grads = parts["tape"].backward(parts["loss"])
        return parts["loss"].value.item(), {name: grads[node] for name, node in parts["bound"].items()}

    def evaluate(self, split=SPLIT_TRAIN):
        """Metrics of a whole split under the current parameters (no gradient)."""
        trajectories = self._split(split)
        if trajectories is None:
            if split == SPLIT_TEST:
                raise NoTestSplit("the dataset has no test split.")
            return None
        parts = self._forward(self.params, trajectories, requires_grad=False)
        return self._metrics(parts, trajectories)

    def batches(self, epoch):
        """Trajectory index batches of ``epoch``, shuffled from the run seed."""
        J = self.dataset.Xtr.shape[0]
        rng = np.random.default_rng(tools.derive_seed(self.config.seed, 1, epoch))
        order = rng.permutation(J)
        size = self.config.batch_size
        return [order[k:k + size] for k in range(0, J, size)]

    def train_net(self, numepochs=None):
        """Train for ``numepochs`` epochs of shuffled mini-batches.

        Validation metrics are computed at the end of each epoch; test
        metrics only through :meth:`test_net`.
        """
        cfg = self.config
        numepochs = cfg.numepochs if numepochs is None else validate_positive_int(numepochs, "numepochs", minimum=0)
        log_every = cfg.log_every or max(1, numepochs // 10)
        opt = nets.adam_init(self.params, cfg.lr)
        start = len(self.stats)
        for epoch in range(start + 1, start + numepochs + 1):
            try:
                for batch in self.batches(epoch):
                    _, grads = self.loss_and_gradients(self.dataset.Xtr[batch])
                    grads = nets.clip_gradients(grads, cfg.clip_grad_norm)
                    self.params = nets.adam_step(opt, self.params, grads)
                train = self.evaluate(SPLIT_TRAIN)
                val = self.evaluate(SPLIT_VAL) if self.dataset.has_val else None
            except (KoopnetError, np.linalg.LinAlgError, FloatingPointError) as exc:
                raise TrainingError(epoch, exc) from exc
            self.stats.append(EpochRecord(epoch, train, val))
            if epoch % log_every == 0 or epoch == start + numepochs:
                logger.info(
                    "epoch %d: pred_anae_tr=%.4g%% pred_anae_va=%s",
                    epoch,
                    train.pred_anae,
                    "n/a" if val is None else f"{val.pred_anae:.4g}%",
                )
        self.trained = True
        return self.stats

    def test_net(self):
        """Metrics on the test split; also stored as ``stats.test``."""
        tools.assert_trained(self.trained)
        if self.dataset is None or not self.dataset.has_test:
            raise NoTestSplit("the dataset has no test split.")
        self.stats.test = self.evaluate(SPLIT_TEST)
        return self.stats.test

    def predict_new(self, X0, m=None):
        """Predicted trajectories ``N x m x d`` from new initial states.

        The initial states themselves are not echoed; ``m`` defaults to the
        training trajectory length minus one.
        """
        tools.assert_trained(self.trained)
        m = self.num_steps if m is None else m
        X0 = tools.assert_state_rows(X0, self.encoder_spec.input_size, "X0")
        tape = ad.Tape()
        bound = nets.bind(tape, self.params, requires_grad=False)
        Y0 = nets.encode(bound, self.encoder_spec, tape.constant(self.scaler.transform(X0).T))
        steps = rollout(partial(self.koopman_layer, bound), Y0, m)
        X_pred = nets.decode(bound, self.decoder_spec, ad.concat_columns(steps))
        return self.scaler.inverse(_from_step_major(X_pred.value, X0.shape[0], m))

    def get_K(self, n=1):
        """Return the Koopman layer weights, or their ``n``-th power."""
        tools.assert_trained(self.trained)
        return self.koopman_layer.power(self.params, n)


__all__ = ["TrajPred", "TrajPredConfig", "rollout"]
