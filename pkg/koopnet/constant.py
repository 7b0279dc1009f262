# Model kind
MODEL_STATEPRED = "statepred"
"""
MODEL_STATEPRED: State prediction from indexed snapshots.
"""

MODEL_TRAJPRED = "trajpred"
"""
MODEL_TRAJPRED: Trajectory prediction from new initial states.
"""

MODEL_Categories = {
    MODEL_STATEPRED: "State prediction at arbitrary real-valued indexes",
    MODEL_TRAJPRED: "Trajectory prediction from new initial states"
}

# Eigenvector mode
EIGVEC_PROJECTED = "projected"
"""
EIGVEC_PROJECTED: DMD modes W = U_r W_tilde.
"""

EIGVEC_EXACT = "exact"
"""
EIGVEC_EXACT: DMD modes W = Y_next V_r S_r^-1 W_tilde / lambda.
"""

EIGVEC_Categories = {
    EIGVEC_PROJECTED: "Projected eigenvectors",
    EIGVEC_EXACT: "Exact eigenvectors"
}

# Activation
ACT_TANH = "tanh"
ACT_RELU = "relu"
ACT_SIGMOID = "sigmoid"
ACT_LINEAR = "linear"

ACT_Categories = {
    ACT_TANH: "Hyperbolic tangent",
    ACT_RELU: "Rectified linear unit",
    ACT_SIGMOID: "Logistic sigmoid",
    ACT_LINEAR: "Identity (no activation)"
}

# File formats
FMT_CSV = "csv"
"""
FMT_CSV: one CSV file, header ``t,f0,f1,...`` (``t`` optional for trajectories).
"""

FMT_NDJSON = "ndjson"
"""
FMT_NDJSON: one ``{"traj": [[...], ...]}`` record per line.
"""

FMT_CSVDIR = "csvdir"
"""
FMT_CSVDIR: directory of per-trajectory CSV files, rows are ordered steps.
"""

SNAPSHOT_FMT_Categories = {
    FMT_CSV: "Snapshot CSV"
}

TRAJECTORY_FMT_Categories = {
    FMT_NDJSON: "Trajectory NDJSON",
    FMT_CSVDIR: "Directory of trajectory CSV files"
}

# Synthetic systems
GEN_LINEAR = "linear"
GEN_POLY_MANIFOLD = "poly-manifold"

GEN_Categories = {
    GEN_LINEAR: "Linear system x_{i+1} = A x_i",
    GEN_POLY_MANIFOLD: "Polynomial slow manifold"
}

# Numerical tolerances
SVD_REL_TOL = 1e-10
"""
SVD_REL_TOL: singular values below SVD_REL_TOL * S[0] are dropped.
"""

EIG_COND_MAX = 1e12
"""
EIG_COND_MAX: eigenvector matrices with a larger condition number are defective.
"""

SPECTRUM_GAP_REL = 1e-6
"""
SPECTRUM_GAP_REL: SVD/eig backward needs pairwise gaps above this times the largest magnitude.
"""

IMAG_RESIDUAL_REL = 1e-4
"""
IMAG_RESIDUAL_REL: evolve() warns when max|Im| exceeds this times max|Re|.
"""

ZERO_EIGENVALUE_TOL = 1e-12
"""
ZERO_EIGENVALUE_TOL: exact-mode eigenvectors fall back to projected below this |lambda|.
"""

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Metric vocabulary
SPLIT_TRAIN = "tr"
SPLIT_VAL = "va"
SPLIT_TEST = "te"

METRIC_PARTS = ("recon", "lin", "pred")
METRIC_KINDS = ("loss", "anae")
METRIC_SPLITS = (SPLIT_TRAIN, SPLIT_VAL)
SUMMARY_REDUCTIONS = ("final", "avg")

METRIC_NAMES = tuple(f"{part}_{kind}" for part in METRIC_PARTS for kind in METRIC_KINDS)
"""
METRIC_NAMES: recon_loss, recon_anae, lin_loss, lin_anae, pred_loss, pred_anae.
"""

STATS_COLUMNS = (
    ("epoch",)
    + tuple(f"{name}_{split}" for split in METRIC_SPLITS for name in METRIC_NAMES)
    + tuple(f"total_loss_{split}" for split in METRIC_SPLITS)
)

SORT_KEYS = tuple(
    f"{reduction}_{name}_{split}"
    for reduction in SUMMARY_REDUCTIONS
    for name in METRIC_NAMES
    for split in METRIC_SPLITS
)
"""
SORT_KEYS: {final|avg}_{recon|lin|pred}_{loss|anae}_{tr|va}, e.g. avg_pred_anae_va.
"""

DEFAULT_SORT_KEY = "avg_pred_anae_va"

CHECKPOINT_SCHEMA_VERSION = 1

SEED_ENV_VAR = "KOOPMAN_SEED"


def validate_category(value, categories, name):
    """Validate a constant against a category dictionary and return it."""
    if value not in categories:
        raise ValueError(f"{name} must be one of {list(categories)}; got {value!r}.")
    return value


def validate_model_kind(value):
    """Validate the model-kind constants used by the CLI and checkpoints."""
    return validate_category(value, MODEL_Categories, "model kind")


def validate_eigvec_mode(value):
    """Validate the eigenvector-mode constants."""
    return validate_category(value, EIGVEC_Categories, "eigvec_mode")


def validate_activation(value):
    """Validate activation constants."""
    return validate_category(value, ACT_Categories, "activation")
