"""Negative learning with complementary labels for training on noisy labels."""

from .data import LabeledDataset, load_idx, make_blobs, split
from .engine import Network, OptimizerState, sgd_step
from .losses import gen_complementary, nl_loss, nl_loss_multi, pl_loss, soft_ce_loss
from .metrics import accuracy, confidence_histogram, filter_metrics, pr_curve
from .noise import NoiseSpec, NoisyDataset, builtin_asymm_map, inject_noise
from .pipeline import (
    FilterPartition,
    PhaseConfig,
    PhaseTrace,
    default_phases,
    pseudo_label_pipeline,
    run_selnlpl,
    train_phase,
)

__version__ = "0.1.0"
