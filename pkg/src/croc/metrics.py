"""Ranking and thresholded metrics for imbalanced binary detection."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outranks a random negative.

    Rank (Mann-Whitney) formulation; tied scores receive half credit through
    average ranks.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0  # average 1-based rank
        i = j
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Sum of precision-at-hit weighted by recall increments.

    Items are ranked by descending score; ties keep their original index
    order (stable sort).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise DataError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order] == 1
    cum_pos = np.cumsum(hits)
    positions = np.arange(1, len(scores) + 1)
    precision_at_hit = cum_pos[hits] / positions[hits]
    return float(precision_at_hit.sum() / n_pos)


def macro_f1(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Unweighted mean of the per-class F1 at a fixed threshold.

    A score >= threshold predicts the anomalous class. Degenerate classes
    (zero precision+recall) contribute F1 = 0.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred = (scores >= threshold).astype(np.int64)
    f1s = []
    for cls in (0, 1):
        tp = int(((pred == cls) & (labels == cls)).sum())
        fp = int(((pred == cls) & (labels != cls)).sum())
        fn = int(((pred != cls) & (labels == cls)).sum())
        denom = 2 * tp + fp + fn
        f1s.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(f1s))
