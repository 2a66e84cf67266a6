"""Dataset ingestion: CSV rows or a synthetic Gaussian-blob generator.

Rows are ``label,v1,...,vn`` with a constant feature count. Features are
z-normalized over the whole set; the train/val split is an 80/20 seeded
shuffle. The synthetic task places ``clusters`` Gaussian blobs per class
(interleaved blobs need nonlinear, capacity-hungry boundaries, which is
what makes the accuracy/latency trade-off non-trivial at desk scale).
"""

from __future__ import annotations

import math
import random
from array import array
from dataclasses import dataclass, field

from .errors import DataError
from .tensor import Tensor

TRAIN_FRACTION = 0.8


@dataclass
class Dataset:
    features: list[array]          # one array('d') row each, already normalized
    labels: list[int]
    n_features: int
    n_classes: int
    train_idx: list[int] = field(default_factory=list)
    val_idx: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def batch(self, idxs: list[int]) -> tuple[Tensor, list[int]]:
        flat = array("d")
        for i in idxs:
            flat.extend(self.features[i])
        return Tensor((len(idxs), self.n_features), flat), [self.labels[i] for i in idxs]


def _normalize(rows: list[array], dim: int) -> None:
    n = len(rows)
    for j in range(dim):
        mean = sum(r[j] for r in rows) / n
        var = sum((r[j] - mean) ** 2 for r in rows) / n
        std = math.sqrt(var)
        if std < 1e-12:
            std = 1.0
        for r in rows:
            r[j] = (r[j] - mean) / std


def _split(n: int, seed: int) -> tuple[list[int], list[int]]:
    idxs = list(range(n))
    random.Random(f"{seed}:split").shuffle(idxs)
    cut = int(n * TRAIN_FRACTION)
    return idxs[:cut], idxs[cut:]


def load_csv(path, seed: int = 0) -> Dataset:
    rows: list[array] = []
    labels: list[int] = []
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                label = int(parts[0])
                feats = array("d", (float(v) for v in parts[1:]))
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value at row {lineno}: {exc}") from None
            if dim is None:
                dim = len(feats)
                if dim == 0:
                    raise DataError(f"{path}: row {lineno} has no feature columns")
            elif len(feats) != dim:
                raise DataError(
                    f"{path}: row {lineno} has {len(feats)} values, expected {dim}")
            if label < 0:
                raise DataError(f"{path}: negative label at row {lineno}")
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: empty dataset")
    _normalize(rows, dim)
    train, val = _split(len(rows), seed)
    return Dataset(rows, labels, dim, max(labels) + 1, train, val)


def make_synthetic(classes: int, dim: int, samples: int, noise: float, seed: int,
                   clusters: int = 1, spread: float = 3.0) -> Dataset:
    """Gaussian class blobs; difficulty rises with ``noise`` and ``clusters``."""
    if classes < 2 or dim < 1 or samples < classes:
        raise DataError(f"degenerate synthetic spec: classes={classes} dim={dim} samples={samples}")
    rng = random.Random(f"{seed}:synthetic")
    centers = [[rng.gauss(0.0, spread) for _ in range(dim)]
               for _ in range(classes * clusters)]
    rows: list[array] = []
    labels: list[int] = []
    for i in range(samples):
        label = i % classes
        center = centers[label * clusters + rng.randrange(clusters)]
        rows.append(array("d", (c + rng.gauss(0.0, noise) for c in center)))
        labels.append(label)
    _normalize(rows, dim)
    train, val = _split(samples, seed)
    return Dataset(rows, labels, dim, classes, train, val)


def load_dataset(spec, seed: int = 0) -> Dataset:
    """``spec`` is a CSV path (str) or a synthetic spec dict."""
    if isinstance(spec, dict):
        return make_synthetic(
            classes=int(spec["classes"]),
            dim=int(spec["dim"]),
            samples=int(spec["samples"]),
            noise=float(spec.get("noise", 1.0)),
            seed=int(spec.get("seed", seed)),
            clusters=int(spec.get("clusters", 1)),
            spread=float(spec.get("spread", 3.0)),
        )
    return load_csv(spec, seed)
