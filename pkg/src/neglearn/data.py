"""Dataset providers: Gaussian blobs, IDX (MNIST) files, stratified splits."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataConfigError(ValueError):
    pass


class IDXFormatError(ValueError):
    pass


@dataclass
class Normalization:
    """Per-feature affine map: stored = (raw - mean) / scale."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, raw):
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.scale

    def invert(self, features):
        return np.asarray(features, dtype=np.float64) * self.scale + self.mean


@dataclass
class LabeledDataset:
    features: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int64, values in [0, n_classes)
    n_classes: int
    provenance: dict = field(default_factory=dict)
    normalization: Normalization | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise DataConfigError("features must be a non-empty (N, d) matrix")
        if self.labels.shape != (len(self.features),):
            raise DataConfigError(
                f"{len(self.labels)} labels for {len(self.features)} feature rows"
            )
        if self.n_classes < 2:
            raise DataConfigError("need at least 2 classes")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DataConfigError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.features)):
            raise DataConfigError("features contain NaN or Inf")

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def raw_features(self) -> np.ndarray:
        if self.normalization is None:
            return self.features.copy()
        return self.normalization.invert(self.features)

    def subset(self, idx) -> "LabeledDataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def make_blobs(n_classes, per_class_n, n_features, separation, rng) -> LabeledDataset:
    """Isotropic unit-variance Gaussian clusters, standardized per feature.

    Centers sit at pairwise distance >= ``separation * sqrt(n_features)``: a
    randomly rotated scaled simplex when ``n_classes <= n_features``, random
    Gaussian centers rescaled to the minimum distance otherwise. Samples are
    ordered by class.
    """
    if n_classes < 2:
        raise DataConfigError("n_classes must be >= 2")
    if n_features < 2:
        raise DataConfigError("n_features must be >= 2")
    if per_class_n < 1:
        raise DataConfigError("per_class_n must be >= 1")
    if not separation > 0:
        raise DataConfigError("separation must be > 0")
    rng = np.random.default_rng(rng)
    target = separation * np.sqrt(n_features)
    if n_classes <= n_features:
        q, _ = np.linalg.qr(rng.standard_normal((n_features, n_features)))
        centers = q[:, :n_classes].T * (target / np.sqrt(2.0))
    else:
        centers = rng.standard_normal((n_classes, n_features))
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        dmin = dist[np.triu_indices(n_classes, 1)].min()
        centers *= target / dmin
    labels = np.repeat(np.arange(n_classes), per_class_n)
    raw = centers[labels] + rng.standard_normal((len(labels), n_features))
    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    scale[scale == 0] = 1.0
    norm = Normalization(mean, scale)
    prov = {
        "source": "blobs",
        "n_classes": n_classes,
        "per_class_n": per_class_n,
        "n_features": n_features,
        "separation": separation,
        "centers": centers.tolist(),
    }
    return LabeledDataset(norm.apply(raw), labels, n_classes, prov, norm)


def _read_exact(f, n, path, what):
    buf = f.read(n)
    if len(buf) != n:
        raise IDXFormatError(f"{path}: truncated file, expected {n} bytes of {what}, got {len(buf)}")
    return buf


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, path, "magic number"))
        if magic != IDX_LABELS_MAGIC:
            raise IDXFormatError(
                f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x} (labels)"
            )
        (count,) = struct.unpack(">I", _read_exact(f, 4, path, "header"))
        data = _read_exact(f, count, path, "label data")
    return np.frombuffer(data, dtype=np.uint8).astype(np.int64)


def read_idx_images(path) -> np.ndarray:
    """Returns uint8 array of shape (count, rows, cols)."""
    with open(path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, path, "magic number"))
        if magic != IDX_IMAGES_MAGIC:
            raise IDXFormatError(
                f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x} (images)"
            )
        count, rows, cols = struct.unpack(">III", _read_exact(f, 12, path, "header"))
        data = _read_exact(f, count * rows * cols, path, "pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (N, rows, cols) and labels (N,) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx(images_path, labels_path, n_classes: int | None = None) -> LabeledDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IDXFormatError(
            f"count mismatch: {len(images)} images in {images_path}, "
            f"{len(labels)} labels in {labels_path}"
        )
    n, rows, cols = images.shape
    if n_classes is None:
        n_classes = max(10, int(labels.max()) + 1) if n else 10
    norm = Normalization(np.zeros(rows * cols), np.full(rows * cols, 255.0))
    prov = {"source": "idx", "images": str(images_path), "labels": str(labels_path),
            "rows": rows, "cols": cols}
    return LabeledDataset(
        images.reshape(n, rows * cols).astype(np.float64) / 255.0, labels, n_classes, prov, norm
    )


def split(dataset: LabeledDataset, fraction: float, rng):
    """Stratified random split; part A gets round(fraction * n_k) of each class k."""
    if not 0 < fraction < 1:
        raise DataConfigError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    a_idx, b_idx = [], []
    for k in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == k)
        if len(members) == 0:
            continue
        if len(members) < 2:
            raise DataConfigError(f"class {k} has {len(members)} sample; cannot stratify")
        members = rng.permutation(members)
        n_a = int(round(fraction * len(members)))
        n_a = min(max(n_a, 1), len(members) - 1)
        a_idx.append(members[:n_a])
        b_idx.append(members[n_a:])
    a = np.sort(np.concatenate(a_idx))
    b = np.sort(np.concatenate(b_idx))
    return dataset.subset(a), dataset.subset(b)


def write_csv(path, dataset: LabeledDataset):
    """One sample per row: id, label, x0..x{d-1}. Floats use repr, so they round-trip."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "label"] + [f"x{j}" for j in range(dataset.n_features)])
        for i, (x, y) in enumerate(zip(dataset.features, dataset.labels)):
            w.writerow([i, int(y)] + [repr(float(v)) for v in x])


def read_csv(path, n_classes: int | None = None) -> LabeledDataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if header[:2] != ["id", "label"]:
        raise DataConfigError(f"{path}: expected header starting with id,label")
    labels = np.array([int(r[1]) for r in body], dtype=np.int64)
    feats = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return LabeledDataset(feats, labels, n_classes, {"source": "csv", "path": str(path)})
