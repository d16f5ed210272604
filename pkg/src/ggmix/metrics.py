"""Clustering and network-recovery scores: Rand index, edge confusion counts, MCC, l1 error."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, NotSupportedError
from .glasso import ZERO_THRESHOLD

ROW_FIELDS = ("dataset_id", "method", "p", "n_k", "lambda", "rand", "tpr", "fpr", "mcc",
              "l1_error", "wall_ms", "error")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def tpr(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def fpr(self) -> float:
        d = self.fp + self.tn
        return self.fp / d if d else 0.0


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def rand_index(a, b) -> float:
    """Fraction of unordered observation pairs on which two partitions agree."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigurationError(f"label vectors must be 1-d and equal length, got {a.shape} and {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ConfigurationError("rand index needs at least two observations")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    same_both = int(_comb2(table).sum())
    same_a = int(_comb2(table.sum(axis=1)).sum())
    same_b = int(_comb2(table.sum(axis=0)).sum())
    pairs = n * (n - 1) // 2
    agree = pairs + 2 * same_both - same_a - same_b
    return agree / pairs


def match_clusters(est_labels, true_labels, K: int | None = None) -> np.ndarray:
    """Permutation ``perm`` (est index -> true index) maximizing label agreement.

    Exhaustive over K! permutations; among equally good permutations the
    first in lexicographic order (identity first) wins.
    """
    est = np.asarray(est_labels)
    truth = np.asarray(true_labels)
    if est.shape != truth.shape:
        raise ConfigurationError("label vectors must have equal length")
    if K is None:
        K = int(max(est.max(), truth.max())) + 1
    if K > 8:
        raise NotSupportedError(f"exhaustive matching supports K <= 8, got {K}")
    table = np.zeros((K, K), dtype=np.int64)
    np.add.at(table, (est, truth), 1)
    best, best_score = None, -1
    for perm in itertools.permutations(range(K)):
        score = int(table[np.arange(K), perm].sum())
        if score > best_score:
            best, best_score = perm, score
    return np.array(best)


def align(est_labels, est_precisions, true_labels, K: int | None = None):
    """Relabel estimated clusters to match the truth.

    Returns ``(labels, precisions)`` where ``precisions[t]`` is the estimate
    matched to true cluster ``t``.
    """
    K = K if K is not None else len(est_precisions)
    perm = match_clusters(est_labels, true_labels, K)
    labels = perm[np.asarray(est_labels)]
    precisions = [None] * K
    for e, t in enumerate(perm):
        precisions[t] = est_precisions[e]
    return labels, precisions


def edge_confusion(est, truth, threshold: float = ZERO_THRESHOLD) -> ConfusionCounts:
    """Edge-level confusion over the strict upper triangles of matched precision matrices."""
    if len(est) != len(truth):
        raise ConfigurationError(f"{len(est)} estimates for {len(truth)} true matrices")
    tp = tn = fp = fn = 0
    for E, T in zip(est, truth):
        E = np.asarray(E)
        T = np.asarray(T)
        if E.shape != T.shape:
            raise ConfigurationError(f"shape mismatch {E.shape} vs {T.shape}")
        iu = np.triu_indices(E.shape[0], k=1)
        pred = np.abs(E[iu]) > threshold
        real = T[iu] != 0
        tp += int(np.sum(pred & real))
        tn += int(np.sum(~pred & ~real))
        fp += int(np.sum(pred & ~real))
        fn += int(np.sum(~pred & real))
    return ConfusionCounts(tp, tn, fp, fn)


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if den == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(den)


def l1_error(est, truth) -> float:
    """sum_k ||est_k - truth_k||_1 over all entries."""
    if len(est) != len(truth):
        raise ConfigurationError(f"{len(est)} estimates for {len(truth)} true matrices")
    return float(sum(np.sum(np.abs(np.asarray(E) - np.asarray(T))) for E, T in zip(est, truth)))


def score_estimate(est_labels, est_precisions, true_labels, true_precisions,
                   threshold: float = ZERO_THRESHOLD) -> dict:
    """Rand, TPR, FPR, MCC and l1 error after matching clusters to the truth."""
    K = len(true_precisions)
    out = {"rand": rand_index(est_labels, true_labels)}
    if est_precisions is None:
        return out
    _, prec = align(est_labels, est_precisions, true_labels, K)
    c = edge_confusion(prec, true_precisions, threshold)
    out.update(tpr=c.tpr, fpr=c.fpr, mcc=mcc(c), l1_error=l1_error(prec, true_precisions))
    return out
