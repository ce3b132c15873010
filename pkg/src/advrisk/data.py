"""Dataset containers, file ingestion, and the synthetic benchmark generator.

Every loader produces a LabeledDataset whose labels are contiguous ids
1..K; the original label names are retained for reporting.  Marginal masses
are implicit: downstream solvers give each point mass 1, so the total
transported mass equals the number of points.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabeledDataset",
    "SyntheticSpec",
    "load_csv",
    "save_csv",
    "load_cifar100_test",
    "generate_synthetic",
]

CIFAR_RECORD_BYTES = 3074  # 1 coarse byte + 1 fine byte + 3072 pixels
CIFAR_FEATURE_DIM = 3072


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable point cloud with class labels.

    features: (N, d) float64; labels: (N,) ids in {1..K}; label_names maps
    class id k to the original label string label_names[k-1].
    """

    features: np.ndarray
    labels: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError("features must be a nonempty (N, d) matrix")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must be a length-N vector")
        k = len(self.label_names)
        if k < 1:
            raise ValueError("at least one class required")
        if labels.min() < 1 or labels.max() > k:
            raise ValueError(f"labels must lie in 1..{k}")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_names", tuple(str(s) for s in self.label_names))

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def class_counts(self) -> np.ndarray:
        """Points per class, indexed by class id - 1; sums to N."""
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the overlapping-Gaussians benchmark.

    Class centers are drawn uniformly from a square of side center_box
    centered at the origin; each point picks a class uniformly at random and
    is sampled from an isotropic Gaussian at that class center.
    """

    n_classes: int = 10
    n_points: int = 1000
    center_box: float = 1.0
    sigma: float = 0.35
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.n_points < self.n_classes:
            raise ValueError("need at least one point per class on average")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def load_csv(path: str | os.PathLike) -> LabeledDataset:
    """Read `label,x1,...,xd` rows (header required, UTF-8, '.' decimals).

    Labels may be arbitrary strings; they are remapped to contiguous ids in
    first-appearance order and the original names kept on the dataset.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        width = len(header)
        if width < 2:
            raise ValueError(f"{path}: expected header label,x1,...,xd")
        name_to_id: dict[str, int] = {}
        names: list[str] = []
        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: ragged row ({len(row)} fields, expected {width})")
            name = row[0].strip()
            if name not in name_to_id:
                name_to_id[name] = len(names) + 1
                names.append(name)
            labels.append(name_to_id[name])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric feature value") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return LabeledDataset(np.array(rows, dtype=np.float64), np.array(labels), tuple(names))


def save_csv(dataset: LabeledDataset, path: str | os.PathLike) -> None:
    """Write the dataset in the load_csv format, using original label names."""
    d = dataset.n_features
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x{j+1}" for j in range(d)])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([dataset.label_names[label - 1]] + [repr(float(v)) for v in row])


def load_cifar100_test(path: str | os.PathLike, n_classes_keep: int) -> LabeledDataset:
    """Read the CIFAR-100 binary test file, keeping fine labels < n_classes_keep.

    Record layout: 1 coarse-label byte, 1 fine-label byte, 3072 pixel bytes
    (three 32x32 channel planes).  Features are the pixels scaled to [0,1].
    """
    if not 1 <= n_classes_keep <= 100:
        raise ValueError(f"n_classes_keep must be in [1,100], got {n_classes_keep}")
    raw = np.fromfile(os.fspath(path), dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
        raise ValueError(
            f"{path}: size {raw.size} is not a positive multiple of {CIFAR_RECORD_BYTES} bytes"
        )
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    fine = records[:, 1].astype(np.int64)
    keep = fine < n_classes_keep
    if not np.any(keep):
        raise ValueError(f"{path}: no records with fine label < {n_classes_keep}")
    features = records[keep, 2:].astype(np.float64) / 255.0
    labels = fine[keep] + 1
    names = tuple(str(k) for k in range(n_classes_keep))
    return LabeledDataset(features, labels, names)


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Two-dimensional overlapping Gaussian classes; pure function of spec.

    Draw order (fixed for reproducibility): class centers, then the class id
    of every point, then the Gaussian offsets.
    """
    rng = np.random.default_rng(spec.seed)
    k, n = spec.n_classes, spec.n_points
    half = 0.5 * spec.center_box
    centers = rng.uniform(-half, half, size=(k, 2))
    raw_labels = rng.integers(1, k + 1, size=n)
    points = centers[raw_labels - 1] + rng.normal(0.0, spec.sigma, size=(n, 2))
    # Relabel classes in first-appearance order (names keep the generator's
    # class ids) so the dataset round-trips through CSV save/load exactly.
    _, first_idx = np.unique(raw_labels, return_index=True)
    appearance = raw_labels[np.sort(first_idx)]
    new_id = np.zeros(k + 1, dtype=np.int64)
    new_id[appearance] = np.arange(1, len(appearance) + 1)
    names = tuple(str(c) for c in appearance)
    return LabeledDataset(points, new_id[raw_labels], names)
