"""Learning low-dimensional dynamical models directly from image sequences.

A deep auto-encoder maps frames to a small feature space and a NARX network
predicts the next feature vector from a short history of features and
controls. Both can be trained separately or jointly with L-BFGS.
"""

from .autoencoder import Autoencoder, pretrain_pca
from .experiment import ExperimentConfig, default_config
from .narx import NarxConfig, NarxPredictor
from .simulators import Dataset, PendulumParams, TileParams
from .trainer import OptimizerConfig, train_joint, train_separate

__version__ = "0.1.0"

__all__ = [
    "Autoencoder",
    "Dataset",
    "ExperimentConfig",
    "NarxConfig",
    "NarxPredictor",
    "OptimizerConfig",
    "PendulumParams",
    "TileParams",
    "default_config",
    "pretrain_pca",
    "train_joint",
    "train_separate",
]
