"""Adversarial knowledge transfer.

Jointly trains a target classifier on labeled target data and pseudo-labeled
unlabeled source data. A generator network with the classifier's architecture
produces the pseudo-labels; instance-level and group-level discriminators
adversarially align its features with the classifier's so those labels land
in the target label space.
"""

from akt._kernels import BACKEND
from akt.alignment import AlignmentConfig, DiscriminatorParams, init_discriminator
from akt.baselines import train_scratch, train_static_pseudo_labels, train_supervised_topline
from akt.config import ExperimentConfig, parse_config, render_config
from akt.data import (
    BatchStream,
    LabeledDataset,
    TransferTask,
    UnlabeledDataset,
    load_idx,
    make_glyph_transfer_task,
    make_synthetic_transfer_task,
)
from akt.networks import MLPParams, MLPSpec, init_mlp
from akt.trainer import MetricsRecord, TrainerConfig, evaluate_model, run_training

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AlignmentConfig",
    "BatchStream",
    "DiscriminatorParams",
    "ExperimentConfig",
    "LabeledDataset",
    "MLPParams",
    "MLPSpec",
    "MetricsRecord",
    "TrainerConfig",
    "TransferTask",
    "UnlabeledDataset",
    "evaluate_model",
    "init_discriminator",
    "init_mlp",
    "load_idx",
    "make_glyph_transfer_task",
    "make_synthetic_transfer_task",
    "parse_config",
    "render_config",
    "run_training",
    "train_scratch",
    "train_static_pseudo_labels",
    "train_supervised_topline",
]
