"""Training objectives: categorical cross-entropy and the max-margin
contrastive loss over all in-batch pairs, each with its analytic gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

PROB_FLOOR = 1e-12


@dataclass
class PairSet:
    positives: list[tuple[int, int]]
    negatives: list[tuple[int, int]]


@dataclass
class LossValue:
    value: float
    breakdown: np.ndarray


def build_pairs(labels) -> PairSet:
    labels = np.asarray(labels)
    if len(labels) < 2:
        raise DataError("a batch needs at least 2 samples to form pairs")
    pos, neg = [], []
    for i, j in zip(*np.triu_indices(len(labels), k=1)):
        (pos if labels[i] == labels[j] else neg).append((int(i), int(j)))
    return PairSet(pos, neg)


def cross_entropy(probs: np.ndarray, labels) -> LossValue:
    labels = np.asarray(labels)
    n = probs.shape[1]
    if labels.min() < 0 or labels.max() >= n:
        raise DataError(f"labels must lie in [0, {n})")
    p = probs[np.arange(len(labels)), labels]
    per_sample = -np.log(np.maximum(p, PROB_FLOOR))
    return LossValue(float(per_sample.mean()), per_sample)


def cross_entropy_grad(probs: np.ndarray, labels) -> np.ndarray:
    """d(mean cross-entropy) / d(probs)."""
    labels = np.asarray(labels)
    b = len(labels)
    rows = np.arange(b)
    p = probs[rows, labels]
    g = np.zeros_like(probs)
    g[rows, labels] = np.where(p > PROB_FLOOR, -1.0 / (b * np.maximum(p, PROB_FLOOR)), 0.0)
    return g


def _pair_geometry(z: np.ndarray, labels):
    labels = np.asarray(labels)
    b = len(labels)
    if b < 2:
        raise DataError("a batch needs at least 2 samples to form pairs")
    iu, ju = np.triu_indices(b, k=1)
    diff = z[iu] - z[ju]
    dist = np.sqrt((diff * diff).sum(axis=1))
    same = labels[iu] == labels[ju]
    return iu, ju, diff, dist, same


def contrastive_max_margin(embeddings: np.ndarray, labels, margin: float = 1.0) -> LossValue:
    """Mean over all unordered pairs of ``d^2`` (same label) or
    ``max(0, margin - d)^2`` (different labels), ``d`` the Euclidean distance."""
    if margin <= 0:
        raise DataError("margin must be positive")
    _, _, _, dist, same = _pair_geometry(embeddings, labels)
    terms = np.where(same, dist ** 2, np.maximum(0.0, margin - dist) ** 2)
    return LossValue(float(terms.mean()), terms)


def contrastive_max_margin_grad(embeddings: np.ndarray, labels, margin: float = 1.0) -> np.ndarray:
    iu, ju, _, dist, same = _pair_geometry(embeddings, labels)
    hinge = np.maximum(0.0, margin - dist)
    safe = np.where(dist > 0, dist, 1.0)
    # coefficient c so that d(term)/d(z_i) = c * (z_i - z_j); coincident negatives get no direction
    coef = np.where(same, 2.0, np.where(dist > 0, -2.0 * hinge / safe, 0.0)) / len(dist)
    b = len(embeddings)
    c = np.zeros((b, b), dtype=embeddings.dtype)
    c[iu, ju] = coef
    c = c + c.T
    return embeddings * c.sum(axis=1, keepdims=True) - c @ embeddings


def pair_distance_means(embeddings: np.ndarray, labels) -> tuple[float, float]:
    """Mean positive-pair and mean negative-pair Euclidean distance."""
    _, _, _, dist, same = _pair_geometry(embeddings, labels)
    pos = float(dist[same].mean()) if same.any() else float("nan")
    neg = float(dist[~same].mean()) if (~same).any() else float("nan")
    return pos, neg
