"""Label-noise injection: symmetric (inclusive / exclusive) and asymmetric flips.

Asymmetric ratio semantics: ``ratio`` is the flip probability for each sample
whose class is a source in the map, not the fraction of the whole dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset

KINDS = ("symm_inc", "symm_exc", "asymm")

# 0-based class indices; MNIST digits index themselves.
MNIST_ASYMM = {2: 7, 3: 8, 7: 1, 5: 6, 6: 5}
# CIFAR-10 order: airplane automobile bird cat deer dog frog horse ship truck
CIFAR10_ASYMM = {9: 1, 2: 0, 4: 7, 3: 5, 5: 3}
_BUILTIN_MAPS = {"mnist": MNIST_ASYMM, "cifar10": CIFAR10_ASYMM}


class NoiseConfigError(ValueError):
    pass


def builtin_asymm_map(name: str) -> dict[int, int]:
    key = name.lower().replace("_", "").replace("-", "")
    if key not in _BUILTIN_MAPS:
        raise NoiseConfigError(
            f"no built-in asymmetric map for {name!r}; supported: {', '.join(_BUILTIN_MAPS)}"
        )
    return dict(_BUILTIN_MAPS[key])


def parse_asymm_map(text: str) -> dict[int, int]:
    """Parse ``"2:7,3:8"`` or a built-in map name."""
    text = text.strip()
    if ":" not in text:
        return builtin_asymm_map(text)
    out = {}
    for part in text.split(","):
        src, dst = part.split(":")
        out[int(src)] = int(dst)
    return out


def format_asymm_map(mapping) -> str:
    return ",".join(f"{s}:{t}" for s, t in sorted(mapping.items()))


@dataclass
class NoiseSpec:
    kind: str
    ratio: float
    asymm_map: dict[int, int] | None = None
    seed: int = 0
    exact_count: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NoiseConfigError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.ratio <= 1.0:
            raise NoiseConfigError(f"noise ratio must lie in [0, 1], got {self.ratio}")
        if self.kind == "asymm":
            if not self.asymm_map:
                raise NoiseConfigError("asymm noise requires an asymm_map")
            loops = [s for s, t in self.asymm_map.items() if s == t]
            if loops:
                raise NoiseConfigError(f"asymm_map has self-loops at {loops}")
        elif self.asymm_map:
            raise NoiseConfigError(f"asymm_map only applies to asymm noise, not {self.kind}")

    def expected_actual_noise(self, n_classes: int) -> float:
        """Expected fraction of flipped labels (asymm: among mapped-source samples)."""
        if self.kind == "symm_inc":
            return self.ratio * (n_classes - 1) / n_classes
        return self.ratio


@dataclass
class NoisyDataset(LabeledDataset):
    clean_labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if self.clean_labels is None:
            self.clean_labels = self.labels.copy()
        self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
        if self.clean_labels.shape != self.labels.shape:
            raise ValueError("clean_labels must match labels")

    @property
    def is_noisy(self) -> np.ndarray:
        return self.labels != self.clean_labels

    @property
    def noise_fraction(self) -> float:
        return float(self.is_noisy.mean())

    def subset(self, idx) -> "NoisyDataset":
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            clean_labels=self.clean_labels[idx],
        )


def _pick(rng, candidates: np.ndarray, ratio: float, exact: bool) -> np.ndarray:
    if exact:
        n = int(round(ratio * len(candidates)))
        return np.sort(rng.choice(candidates, size=n, replace=False))
    return candidates[rng.random(len(candidates)) < ratio]


def inject_noise(clean: LabeledDataset, spec: NoiseSpec) -> NoisyDataset:
    """Corrupt labels i.i.d. per sample (or an exact-size subset with ``exact_count``).

    symm_inc redraws uniformly over all classes, so a redraw can land on the
    true class; symm_exc redraws over the other classes only.
    """
    rng = np.random.default_rng(spec.seed)
    c = clean.n_classes
    y_clean = clean.labels
    y = y_clean.copy()
    if spec.kind == "asymm":
        mapping = spec.asymm_map
        bad = [k for k in list(mapping) + list(mapping.values()) if not 0 <= k < c]
        if bad:
            raise NoiseConfigError(f"asymm_map classes {bad} outside [0, {c})")
        sources = np.flatnonzero(np.isin(y_clean, list(mapping)))
        hit = _pick(rng, sources, spec.ratio, spec.exact_count)
        y[hit] = [mapping[int(k)] for k in y_clean[hit]]
    else:
        hit = _pick(rng, np.arange(len(y)), spec.ratio, spec.exact_count)
        if spec.kind == "symm_inc":
            y[hit] = rng.integers(0, c, size=len(hit))
        else:
            y[hit] = (y_clean[hit] + rng.integers(1, c, size=len(hit))) % c
    prov = dict(clean.provenance)
    prov["noise"] = {"kind": spec.kind, "ratio": spec.ratio, "seed": spec.seed}
    return NoisyDataset(
        clean.features, y, c, prov, clean.normalization, clean_labels=y_clean.copy()
    )


def write_audit_csv(path, data: NoisyDataset):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "y_observed", "y_clean", "is_noisy"])
        for i, (yo, yc) in enumerate(zip(data.labels, data.clean_labels)):
            w.writerow([i, int(yo), int(yc), int(yo != yc)])
