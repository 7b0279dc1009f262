# import dependencies
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets
from .constant import (
    ACT_TANH,
    EIGVEC_EXACT,
    EIGVEC_PROJECTED,
    IMAG_RESIDUAL_REL,
    MODEL_STATEPRED,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VAL,
    ZERO_EIGENVALUE_TOL,
    validate_activation,
    validate_eigvec_mode,
)
from .core import (
    ConfigMixin,
    DegenerateIndexes,
    ImaginaryResidualWarning,
    KoopmanEigen,
    KoopnetError,
    NoTestSplit,
    RankTooLarge,
    TrainingError,
    ZeroEigenvalueWarning,
    as_matrix,
    validate_layer_sizes,
    validate_nonnegative,
    validate_positive_int,
)
from .data import Scaler, map_new_index
from .metrics import EpochMetrics, EpochRecord, LossWeights, RunStats, anae_or_nan, autoencoder_decay, k_regularizer, total_loss
from .utils import tools

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StatePredConfig(ConfigMixin):
    """Hyperparameters of a :class:`StatePred` run.

    ``decoder_loss_weight``, ``weight_decay`` and ``Kreg`` are the alpha, beta
    and gamma of the training loss.
    """

    rank: int
    encoded_size: int
    encoder_hidden_layers: tuple = ()
    decoder_hidden_layers: tuple = None
    activation: str = ACT_TANH
    use_bias: bool = True
    numepochs: int = 10
    decoder_loss_weight: float = 1e-2
    weight_decay: float = 0.0
    Kreg: float = 1e-3
    lr: float = 1e-3
    seed: int = 0
    eigvec_mode: str = EIGVEC_PROJECTED
    detach_eig_gradient: bool = False
    scale: bool = True
    anae_eps: float = 0.0
    clip_grad_norm: float = None
    log_every: int = None

    def __post_init__(self):
        validate_positive_int(self.rank, "rank")
        validate_positive_int(self.encoded_size, "encoded_size")
        if self.rank > self.encoded_size:
            raise RankTooLarge(f"rank ({self.rank}) must not exceed encoded_size ({self.encoded_size}).")
        object.__setattr__(self, "encoder_hidden_layers",
                           validate_layer_sizes(self.encoder_hidden_layers, "encoder_hidden_layers"))
        object.__setattr__(self, "decoder_hidden_layers",
                           validate_layer_sizes(self.decoder_hidden_layers, "decoder_hidden_layers"))
        validate_activation(self.activation)
        validate_positive_int(self.numepochs, "numepochs", minimum=0)
        for name in ("decoder_loss_weight", "weight_decay", "Kreg", "anae_eps"):
            object.__setattr__(self, name, validate_nonnegative(getattr(self, name), name))
        object.__setattr__(self, "lr", validate_nonnegative(self.lr, "lr"))
        if self.lr == 0:
            raise ValueError("lr must be > 0.")
        validate_positive_int(self.seed, "seed", minimum=0)
        validate_eigvec_mode(self.eigvec_mode)
        if self.clip_grad_norm is not None:
            object.__setattr__(self, "clip_grad_norm", validate_nonnegative(self.clip_grad_norm, "clip_grad_norm"))
        if self.clip_grad_norm == 0:
            raise ValueError("clip_grad_norm must be > 0 when given.")
        if self.log_every is not None:
            validate_positive_int(self.log_every, "log_every")

    @property
    def loss_weights(self):
        return LossWeights(alpha=self.decoder_loss_weight, beta=self.weight_decay, gamma=self.Kreg)


@dataclass(frozen=True)
class KoopmanNodes:
    """Tape nodes of one Koopman fit."""

    W: ad.Node
    lam: ad.Node
    omega: ad.Node
    b: ad.Node
    K: ad.Node = None

    def to_eigen(self):
        return KoopmanEigen(
            W=self.W.value.copy(),
            lam=self.lam.value.reshape(-1).copy(),
            omega=self.omega.value.reshape(-1).copy(),
            b=self.b.value.reshape(-1).copy(),
        )

    @classmethod
    def from_eigen(cls, tape, eigen):
        return cls(
            W=tape.constant(eigen.W),
            lam=tape.constant(eigen.lam.reshape(-1, 1)),
            omega=tape.constant(eigen.omega.reshape(-1, 1)),
            b=tape.constant(eigen.b.reshape(-1, 1)),
        )


def _step_pairs(indexes):
    """Columns ``(prev, next)`` of states whose internal indexes differ by one."""
    position = {int(i): col for col, i in enumerate(indexes)}
    starts = [i for i in sorted(position) if i + 1 in position]
    if not starts:
        raise DegenerateIndexes("no two training states are one index step apart.")
    return [position[i] for i in starts], [position[i + 1] for i in starts], position[min(position)]


def _exact_modes(B, W_tilde, lam, W_projected):
    """``W_k = Y_next V_r S_r^-1 w_k / lambda_k``, projected where ``|lambda_k|`` vanishes."""
    small = np.abs(lam.value.reshape(-1)) < ZERO_EIGENVALUE_TOL
    lifted = ad.matmul(ad.to_complex(B), W_tilde)
    if not small.any():
        return ad.multiply(lifted, ad.transpose(ad.reciprocal(lam)))
    warnings.warn(
        f"{int(small.sum())} eigenvalue(s) below {ZERO_EIGENVALUE_TOL:g}; using projected modes for them.",
        ZeroEigenvalueWarning,
        stacklevel=3,
    )
    keep = np.flatnonzero(~small)
    columns = []
    if keep.size:
        lam_kept = ad.slice_columns(ad.transpose(lam), keep)
        exact = ad.multiply(ad.slice_columns(lifted, keep), ad.reciprocal(lam_kept))
    for k in range(lam.shape[0]):
        if small[k]:
            columns.append(ad.slice_columns(W_projected, [k]))
        else:
            columns.append(ad.slice_columns(exact, [int(np.searchsorted(keep, k))]))
    return ad.concat_columns(columns)


def fit_on_tape(Y, indexes, rank, eigvec_mode=EIGVEC_PROJECTED, detach_eig=False):
    """Koopman fit of encoded states ``Y`` (columns) with internal ``indexes``.

    Returns
    -------
    KoopmanNodes
        Modes ``W``, eigenvalues, continuous eigenvalues ``log(lam)``,
        coefficients ``W^+ y_0`` and the full operator
        ``K = Y_next V_r S_r^-1 U_r^T``.
    """
    validate_eigvec_mode(eigvec_mode)
    prev, nxt, base = _step_pairs(indexes)
    Y_prev = ad.slice_columns(Y, prev)
    Y_next = ad.slice_columns(Y, nxt)
    U, S, V = ad.svd_truncated(Y_prev, rank)
    if U.shape[1] < rank:
        raise RankTooLarge(f"rank {rank} exceeds the effective rank {U.shape[1]} of the encoded states.")
    B = ad.multiply(ad.matmul(Y_next, V), ad.reciprocal(ad.transpose(S)))
    K_reduced = ad.matmul(ad.transpose(U), B)
    lam, W_tilde = ad.eig(K_reduced)
    if detach_eig:
        lam, W_tilde = ad.detach(lam), ad.detach(W_tilde)
    W = ad.matmul(ad.to_complex(U), W_tilde)
    if eigvec_mode == EIGVEC_EXACT:
        W = _exact_modes(B, W_tilde, lam, W)
    y0 = ad.to_complex(ad.slice_columns(Y, [base]))
    b = ad.matmul(ad.pinv_from_svd(W), y0)
    return KoopmanNodes(W=W, lam=lam, omega=ad.complex_log(lam), b=b, K=ad.matmul(B, ad.transpose(U)))


def evolve_complex_on_tape(nodes, indexes):
    """Complex ``W diag(exp(omega i)) b`` for every index, as columns."""
    return ad.matmul(nodes.W, ad.complex_exp_evolve(nodes.omega, indexes, nodes.b))


def koopman_fit(Y, rank, eigvec_mode=EIGVEC_PROJECTED, indexes=None):
    """Fit the Koopman eigen-data of encoded states.

    Parameters
    ----------
    Y : array_like
        Real ``encoded_size x n`` matrix, one state per column, ordered by
        internal index.
    rank : int
        SVD truncation rank.
    eigvec_mode : str
        ``EIGVEC_PROJECTED`` or ``EIGVEC_EXACT``.
    indexes : array_like, optional
        Internal integer index of every column; defaults to ``0..n-1``.

    Returns
    -------
    KoopmanEigen
    """
    Y = as_matrix(Y, "encoded states", allow_complex=False)
    if Y.shape[1] < 2:
        raise DegenerateIndexes("koopman_fit needs at least 2 encoded states.")
    indexes = np.arange(Y.shape[1]) if indexes is None else np.asarray(indexes, dtype=int)
    tape = ad.Tape()
    return fit_on_tape(tape.constant(Y), indexes, rank, eigvec_mode).to_eigen()


def imaginary_residual(values):
    """Largest ``|imag|`` of complex evolved states relative to their largest ``|real|``."""
    values = np.asarray(values)
    imag = np.abs(values.imag).max() if values.size else 0.0
    real = np.abs(values.real).max() if values.size else 0.0
    if imag == 0.0:
        return 0.0
    return float(imag / real) if real > 0.0 else float("inf")


def _warn_imaginary_residual(residual, stacklevel=3):
    if residual > IMAG_RESIDUAL_REL:
        warnings.warn(
            f"evolved states carry an imaginary residual of {residual:.3g} relative to their real part.",
            ImaginaryResidualWarning,
            stacklevel=stacklevel,
        )


def evolve(ke, i):
    """Encoded state ``W diag(exp(omega i)) b`` at real index ``i``.

    ``i`` may be a scalar (returns a vector) or a sequence (returns one
    column per index).  Emits :class:`ImaginaryResidualWarning` when the
    discarded imaginary part exceeds ``1e-4`` of the real part.
    """
    scalar = np.ndim(i) == 0
    idx = np.atleast_1d(np.asarray(i, dtype=float))
    values = ke.W @ (np.exp(ke.omega.reshape(-1, 1) * idx.reshape(1, -1)) * ke.b.reshape(-1, 1))
    _warn_imaginary_residual(imaginary_residual(values))
    return values.real[:, 0] if scalar else values.real


class StatePred:
    """State prediction: autoencoder plus SVD-fitted Koopman operator.

    Parameters
    ----------
    dataset : SnapshotDataset
        Indexed snapshots; the fit uses the training split only.
    config : StatePredConfig
        Hyperparameters.

    Attributes
    ----------
    max_imag_residual : float
        Largest relative imaginary part discarded from evolved encoded
        states by any evaluation or prediction so far.
    """

    kind = MODEL_STATEPRED

    def __init__(self, dataset, config):
        self.dataset = dataset
        self.config = config
        n_tr = dataset.Xtr.shape[0]
        if config.rank > n_tr - 1:
            raise RankTooLarge(f"rank ({config.rank}) must not exceed n_tr - 1 = {n_tr - 1}.")
        self.encoder_spec, self.decoder_spec = nets.autoencoder_specs(
            dataset.state_dim,
            config.encoded_size,
            config.encoder_hidden_layers,
            config.decoder_hidden_layers,
            config.activation,
            config.use_bias,
        )
        self.params = nets.build_autoencoder(self.encoder_spec, self.decoder_spec, config.seed)
        self.scaler = Scaler.fit(dataset.Xtr) if config.scale else Scaler.identity(dataset.state_dim)
        self.index_map = dataset.index_map
        self.eigen = None
        self.max_imag_residual = 0.0
        self.stats = RunStats()
        self.trained = False

    @classmethod
    def restore(cls, config, encoder_spec, decoder_spec, params, eigen, scaler, index_map):
        """Rebuild a trained predictor without its training data."""
        model = cls.__new__(cls)
        model.dataset = None
        model.config = config
        model.encoder_spec = encoder_spec
        model.decoder_spec = decoder_spec
        model.params = dict(params)
        model.scaler = scaler
        model.index_map = index_map
        model.eigen = eigen
        model.max_imag_residual = 0.0
        model.stats = RunStats()
        model.trained = True
        return model

    def _split(self, split):
        ds = self.dataset
        if split == SPLIT_TRAIN:
            return ds.Xtr, ds.itr.astype(float)
        if split == SPLIT_VAL:
            X, t = ds.Xva, ds.tva
        elif split == SPLIT_TEST:
            X, t = ds.Xte, ds.tte
        else:
            raise ValueError(f"split must be one of {[SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST]}; got {split!r}.")
        if X is None:
            return None, None
        return X, map_new_index(self.index_map, t)

    def _forward(self, params, split, requires_grad):
        """Build the loss graph of ``split``; the Koopman fit always uses the training split."""
        cfg = self.config
        tape = ad.Tape()
        bound = nets.bind(tape, params, requires_grad=requires_grad)
        X_tr = tape.constant(self.scaler.transform(self.dataset.Xtr).T)
        Y_tr = nets.encode(bound, self.encoder_spec, X_tr)
        nodes = fit_on_tape(Y_tr, self.dataset.itr, cfg.rank, cfg.eigvec_mode, cfg.detach_eig_gradient)

        X_orig, idx = self._split(split)
        if split == SPLIT_TRAIN:
            X, Y = X_tr, Y_tr
        else:
            X = tape.constant(self.scaler.transform(X_orig).T)
            Y = nets.encode(bound, self.encoder_spec, X)
        # the evolution base state at internal index 0 is excluded from lin/pred
        cols = np.flatnonzero(idx != 0)
        X_recon = nets.decode(bound, self.decoder_spec, Y)
        recon = ad.mse(X_recon, X)
        parts = {"recon": recon, "X_recon": X_recon, "nodes": nodes, "cols": cols, "X_orig": X_orig}
        if cols.size:
            Y_complex = evolve_complex_on_tape(nodes, idx[cols])
            Y_pred = ad.real_part(Y_complex)
            Y_true = ad.slice_columns(Y, cols)
            X_pred = nets.decode(bound, self.decoder_spec, Y_pred)
            parts.update(
                lin=ad.mse(Y_pred, Y_true),
                pred=ad.mse(X_pred, ad.slice_columns(X, cols)),
                Y_pred=Y_pred,
                Y_complex=Y_complex,
                Y_true=Y_true,
                X_pred=X_pred,
            )
        else:
            zero = tape.constant(0.0)
            parts.update(lin=zero, pred=zero)
        ae = autoencoder_decay(bound, nets.weight_names(params))
        kreg = k_regularizer(MODEL_STATEPRED, nodes.K)
        parts["loss"] = total_loss(recon, parts["lin"], parts["pred"], ae, kreg, cfg.loss_weights)
        parts["tape"] = tape
        parts["bound"] = bound
        return parts

    def _metrics(self, parts):
        eps = self.config.anae_eps
        X_orig = parts["X_orig"]
        cols = parts["cols"]
        recon_anae = anae_or_nan(X_orig, self.scaler.inverse(parts["X_recon"].value.T), eps)
        if cols.size:
            lin_anae = anae_or_nan(parts["Y_true"].value, parts["Y_pred"].value, eps)
            pred_anae = anae_or_nan(X_orig[cols], self.scaler.inverse(parts["X_pred"].value.T), eps)
            lin_loss = parts["lin"].value.item()
            pred_loss = parts["pred"].value.item()
        else:
            lin_anae = pred_anae = lin_loss = pred_loss = float("nan")
        return EpochMetrics(
            recon_loss=parts["recon"].value.item(),
            recon_anae=recon_anae,
            lin_loss=lin_loss,
            lin_anae=lin_anae,
            pred_loss=pred_loss,
            pred_anae=pred_anae,
            total_loss=parts["loss"].value.item(),
        )

    def _record_imag_residual(self, values):
        residual = imaginary_residual(values)
        self.max_imag_residual = max(self.max_imag_residual, residual)
        return residual

    def loss_and_gradients(self, params=None):
        """Training loss and its gradient with respect to every parameter."""
        params = self.params if params is None else params
        parts = self._forward(params, SPLIT_TRAIN, requires_grad=True)
        grads = parts["tape"].backward(parts["loss"])
        return parts["loss"].value.item(), {name: grads[node] for name, node in parts["bound"].items()}

    def evaluate(self, split=SPLIT_TRAIN):
        """Metrics of ``split`` under the current parameters (no gradient).

        Evaluating the training split also refreshes :attr:`eigen`.
        """
        if split != SPLIT_TRAIN and self._split(split)[0] is None:
            if split == SPLIT_TEST:
                raise NoTestSplit("the dataset has no test split.")
            return None
        parts = self._forward(self.params, split, requires_grad=False)
        if split == SPLIT_TRAIN:
            self.eigen = parts["nodes"].to_eigen()
        if "Y_complex" in parts:
            self._record_imag_residual(parts["Y_complex"].value)
        return self._metrics(parts)

    def train_net(self, numepochs=None):
        """Train for ``numepochs`` epochs (default from the config).

        Each epoch fits the Koopman operator on the full training split, takes
        one Adam step on the composite loss and then records train and
        validation metrics under the updated parameters.

        Returns
        -------
        RunStats

        Raises
        ------
        TrainingError
            Wraps any numerical failure with the epoch at which it happened.
        """
        cfg = self.config
        numepochs = cfg.numepochs if numepochs is None else validate_positive_int(numepochs, "numepochs", minimum=0)
        log_every = cfg.log_every or max(1, numepochs // 10)
        opt = nets.adam_init(self.params, cfg.lr)
        start = len(self.stats)
        for epoch in range(start + 1, start + numepochs + 1):
            try:
                _, grads = self.loss_and_gradients()
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
        if numepochs == 0 and self.eigen is None:
            self.evaluate(SPLIT_TRAIN)
        self.trained = True
        return self.stats

    def test_net(self):
        """Metrics on the test split; also stored as ``stats.test``."""
        tools.assert_trained(self.trained)
        if self.dataset is None or not self.dataset.has_test:
            raise NoTestSplit("the dataset has no test split.")
        self.stats.test = self.evaluate(SPLIT_TEST)
        return self.stats.test

    def predict_new(self, t_list):
        """Predicted states (one row per requested original index).

        Any real index is accepted: inside the training range it
        interpolates, beyond it extrapolates forward, below it backward.
        """
        tools.assert_trained(self.trained)
        idx = map_new_index(self.index_map, np.atleast_1d(np.asarray(t_list, dtype=float)))
        tape = ad.Tape()
        bound = nets.bind(tape, self.params, requires_grad=False)
        Y_complex = evolve_complex_on_tape(KoopmanNodes.from_eigen(tape, self.eigen), idx)
        _warn_imaginary_residual(self._record_imag_residual(Y_complex.value))
        Y_pred = ad.real_part(Y_complex)
        X_pred = nets.decode(bound, self.decoder_spec, Y_pred)
        return self.scaler.inverse(X_pred.value.T)

    def get_eigen(self):
        """Return the fitted :class:`KoopmanEigen`."""
        tools.assert_trained(self.trained)
        return self.eigen


__all__ = [
    "StatePred",
    "StatePredConfig",
    "KoopmanNodes",
    "fit_on_tape",
    "evolve_complex_on_tape",
    "imaginary_residual",
    "koopman_fit",
    "evolve",
]
