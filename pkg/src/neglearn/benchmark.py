"""The frozen blob benchmark used by the acceptance suite and the shipped configs.

4 classes, 16 features, 500 samples per class at separation 4, split 90/10
into a noisy training set and a clean test set, classified by a 64-64 MLP.
"""

from __future__ import annotations

from dataclasses import dataclass

from .experiment import DataSpec, ExperimentConfig, prepare_data
from .pipeline import pseudo_schedule

N_CLASSES = 4
N_FEATURES = 16
PER_CLASS_N = 500
SEPARATION = 4.0
TRAIN_FRACTION = 0.9
HIDDEN = (64, 64)
# PL-only reference: the SelNLPL budget (3 x 50 epochs) on the pseudo-label step schedule
BASELINE_EPOCHS = 150


def benchmark_config(ratio: float, seed: int = 0, kind: str = "symm_inc",
                     pseudo_label: bool = True, baseline: bool = False) -> ExperimentConfig:
    cfg = ExperimentConfig(
        data=DataSpec("blobs", N_CLASSES, PER_CLASS_N, N_FEATURES, SEPARATION, TRAIN_FRACTION),
        noise_kind=kind,
        noise_ratio=ratio,
        hidden=HIDDEN,
        pseudo_label=pseudo_label,
        seed=seed,
    )
    if baseline:
        cfg.baseline = pseudo_schedule("PL", BASELINE_EPOCHS)
    return cfg


@dataclass
class Benchmark:
    train: object  # NoisyDataset
    test: object  # LabeledDataset with clean labels
    sizes: list[int]


def make_benchmark(ratio: float, seed: int = 0, kind: str = "symm_inc") -> Benchmark:
    train, test = prepare_data(benchmark_config(ratio, seed, kind))
    return Benchmark(train, test, [N_FEATURES, *HIDDEN, N_CLASSES])
