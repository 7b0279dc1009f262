# import dependencies
from os import environ

import numpy as np

from ..constant import SEED_ENV_VAR
from ..core import NotTrained, ShapeMismatch


def assert_trained(trained):
    if not trained:
        raise NotTrained(
            "Model isn't trained. Use train_net() method to fit the model.")


def assert_state_rows(X, state_dim, name="X"):
    """Return ``X`` as a 2-D array of ``state_dim``-wide rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != state_dim:
        raise ShapeMismatch(
            f"{name} must hold states of dimension {state_dim}; got shape {X.shape}.")
    return X


def derive_seed(master_seed, *keys):
    """Independent 32-bit seed for ``keys`` under ``master_seed``."""
    sequence = np.random.SeedSequence([int(master_seed), *(int(key) for key in keys)])
    return int(sequence.generate_state(1)[0])


def seed_from_env(seed):
    """``KOOPMAN_SEED`` from the environment when set, otherwise ``seed``."""
    value = environ.get(SEED_ENV_VAR)
    if value is None or value.strip() == "":
        return seed
    try:
        return int(value)
    except ValueError as exc:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer; got {value!r}.") from exc
