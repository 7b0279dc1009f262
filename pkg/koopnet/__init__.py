"""Top-level package for koopnet."""

__author__ = """advancehs"""
__email__ = "1019753743@qq.com"
__version__ = "0.1.0"
from . import constant
from . import linalg
from . import autodiff
from . import nets
from . import metrics
from . import data
from . import datagen
from . import hypsearch
from .StatePred import StatePred, StatePredConfig, koopman_fit, evolve
from .TrajPred import TrajPred, TrajPredConfig, rollout
from .checkpoint import save_checkpoint, load_checkpoint
from .hypsearch import run_hyp_search
__all__ = [
    'constant',
    'linalg',
    'autodiff',
    'nets',
    'metrics',
    'data',
    'datagen',
    'hypsearch',
    'StatePred',
    'StatePredConfig',
    'koopman_fit',
    'evolve',
    'TrajPred',
    'TrajPredConfig',
    'rollout',
    'save_checkpoint',
    'load_checkpoint',
    'run_hyp_search',
]
