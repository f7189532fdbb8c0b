"""Shared test oracles, independent of the library's implementation paths."""

from __future__ import annotations

import numpy as np


def brute_auc(scores, labels) -> float:
    """Pairwise positive-vs-negative comparison, ties worth half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels != 1]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def brute_ap(scores, labels) -> float:
    """Walk the descending ranking (stable on ties) and average precision at hits."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / rank
    return total / int((labels == 1).sum())


def bfs_cover(adjacency_sets: dict, labeled, k: int) -> set:
    """Plain dict-of-sets multi-source BFS; returns nodes within k hops."""
    visited = set(int(v) for v in labeled)
    frontier = set(visited)
    for _ in range(k):
        nxt = set()
        for u in frontier:
            nxt |= adjacency_sets.get(u, set())
        nxt -= visited
        if not nxt:
            break
        visited |= nxt
        frontier = nxt
    return visited


def union_adjacency_sets(graph) -> dict:
    """Union-of-relations neighbor sets built arc by arc from the CSR arrays."""
    adj: dict[int, set] = {}
    for rel in graph.adjacency:
        for u, v in zip(rel.src, rel.dst):
            adj.setdefault(int(v), set()).add(int(u))
    return adj


def dense_neighbor_matmul(messages: np.ndarray, dst: np.ndarray, num_nodes: int) -> np.ndarray:
    """Arc-to-node sum as an explicit dense indicator-matrix multiplication."""
    indicator = np.zeros((num_nodes, len(dst)))
    for arc, d in enumerate(dst):
        indicator[int(d), arc] = 1.0
    return indicator @ messages


def numeric_gradient(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gf[i] = (up - down) / (2 * step)
    return g


def feature_logistic_auc(features, labels, train_mask, eval_mask) -> float:
    """Feature-only logistic-regression baseline AUC (test utility)."""
    from sklearn.linear_model import LogisticRegression

    from croc.metrics import auc

    clf = LogisticRegression(max_iter=1000)
    clf.fit(features[train_mask], np.asarray(labels)[train_mask])
    scores = clf.predict_proba(features)[:, 1]
    return auc(scores[eval_mask], np.asarray(labels)[eval_mask])
