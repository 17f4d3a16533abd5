"""Classification and clustering metrics, plus the train/test splitter.

Classification reports accuracy and macro-averaged F1. Clustering runs a
seeded k-means over learned embeddings and scores the partition against
ground-truth classes with ARI and AMI, affinely normalized from [-1, 1]
into [0, 1] for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.metrics import adjusted_mutual_info_score, adjusted_rand_score


class LengthMismatch(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Row = truth, column = prediction."""

    counts: np.ndarray

    @classmethod
    def from_labels(cls, truth: Sequence[int], pred: Sequence[int], num_classes: int | None = None) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        if truth.shape != pred.shape or truth.size == 0:
            raise LengthMismatch(f"truth has {truth.size} labels, pred has {pred.size}")
        c = num_classes if num_classes is not None else int(max(truth.max(), pred.max())) + 1
        counts = np.zeros((c, c), dtype=np.int64)
        for t, p in zip(truth, pred):
            counts[t, p] += 1
        return cls(counts)


@dataclass
class Partition:
    """Dense cluster assignment over sample indices."""

    labels: np.ndarray
    k: int

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.size and not (0 <= self.labels.min() and self.labels.max() < self.k):
            raise ValueError("cluster ids must lie in [0, k)")


def accuracy(truth: Sequence[int], pred: Sequence[int]) -> float:
    cm = ConfusionMatrix.from_labels(truth, pred)
    return float(np.trace(cm.counts) / cm.counts.sum())


def f1_macro(truth: Sequence[int], pred: Sequence[int]) -> float:
    """Unweighted mean of per-class F1; a class with P + R = 0 scores 0."""
    cm = ConfusionMatrix.from_labels(truth, pred).counts
    scores = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        denom = 2 * tp + (cm[c, :].sum() - tp) + (cm[:, c].sum() - tp)
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> Partition:
    """Lloyd's algorithm with k-means++ seeding, deterministic under seed.

    A cluster that empties is re-seeded to the point currently farthest
    from its assigned centroid. Iteration stops when the largest centroid
    shift drops below ``tol``.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise TooFewPoints(f"{n} points for k={k}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = points[rng.integers(n)]
        else:
            r = rng.random() * total
            centers[i] = points[np.searchsorted(np.cumsum(d2), r)]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dists, axis=1)
        new_centers = centers.copy()
        for c in range(k):
            members = points[labels == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
            else:
                farthest = int(np.argmax(dists[np.arange(n), labels]))
                new_centers[c] = points[farthest]
                labels[farthest] = c
        shift = float(np.max(np.sqrt(np.sum((new_centers - centers) ** 2, axis=1))))
        centers = new_centers
        if shift < tol:
            break
    return Partition(labels=labels, k=k)


def _check_same_length(a: Partition, b: Partition) -> None:
    if a.labels.shape != b.labels.shape:
        raise LengthMismatch(f"partitions cover {a.labels.size} vs {b.labels.size} samples")


def ari(a: Partition, b: Partition) -> float:
    """Pair-counting adjusted Rand index, raw value in [-1, 1]."""
    _check_same_length(a, b)
    return float(adjusted_rand_score(a.labels, b.labels))


def ami(a: Partition, b: Partition) -> float:
    """Adjusted mutual information (permutation model, max normalization)."""
    _check_same_length(a, b)
    return float(adjusted_mutual_info_score(a.labels, b.labels, average_method="max"))


def normalize01(x: float) -> float:
    """Affine map of [-1, 1] onto [0, 1]."""
    if not -1.0 - 1e-12 <= x <= 1.0 + 1e-12:
        raise OutOfRange(f"{x} outside [-1, 1]")
    return min(1.0, max(0.0, (x + 1.0) / 2.0))


def split_train_test(samples: Sequence, ratio: float = 0.7, seed: int = 0):
    """Seeded uniform shuffle followed by a ratio split.

    Returns disjoint (train, test) lists whose union is the input.
    """
    if not samples:
        raise ValueError("cannot split an empty sample list")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio {ratio} outside (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    cut = int(len(samples) * ratio)
    train = [samples[i] for i in order[:cut]]
    test = [samples[i] for i in order[cut:]]
    return train, test
