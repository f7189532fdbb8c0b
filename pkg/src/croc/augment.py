"""Context refactoring: row-shuffle node features and mix with the originals.

The refactored view keeps every edge and relation assignment of the source
graph; only the feature matrix changes. A fresh view is drawn each training
epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import MultiRelationGraph


@dataclass
class RefactoredView:
    """One epoch's refactored features over the original adjacency."""

    graph: MultiRelationGraph
    permutation: np.ndarray
    alpha: float
    mixed_features: np.ndarray
    epoch: int = 0


def shuffle_features(features: np.ndarray, rng: np.random.Generator):
    """Row-permute the feature matrix with a uniformly random permutation.

    Returns (permutation, shuffled) with shuffled[i] = features[permutation[i]].
    """
    n = features.shape[0]
    if n < 2:
        raise ValueError("feature shuffling requires at least 2 nodes")
    perm = rng.permutation(n)
    return perm, features[perm]


def mix_features(original: np.ndarray, shuffled: np.ndarray, alpha: float) -> np.ndarray:
    """Convex blend alpha * original + (1 - alpha) * shuffled.

    Entries where the two operands already agree bitwise are passed through
    unchanged, so the blend's convex fixed point (identical inputs) is exact in
    floating point, as are the alpha = 0 and alpha = 1 endpoints.
    """
    if original.shape != shuffled.shape:
        raise ValueError("mix_features requires matching shapes")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    blend = alpha * original + (1.0 - alpha) * shuffled
    return np.where(original == shuffled, original, blend)


def refactor_epoch(graph: MultiRelationGraph, alpha: float, rng: np.random.Generator,
                   epoch: int = 0, permutation: np.ndarray | None = None) -> RefactoredView:
    """Draw one refactored view: shuffle rows, mix, share the adjacency.

    ``permutation`` overrides the random draw (test hook, e.g. the identity
    permutation); it must be a bijection on 0..N-1.
    """
    if permutation is None:
        permutation, shuffled = shuffle_features(graph.features, rng)
    else:
        permutation = np.asarray(permutation)
        if not np.array_equal(np.sort(permutation), np.arange(graph.num_nodes)):
            raise ValueError("permutation must be a bijection on 0..N-1")
        shuffled = graph.features[permutation]
    mixed = mix_features(graph.features, shuffled, alpha)
    return RefactoredView(graph=graph, permutation=permutation, alpha=alpha,
                          mixed_features=mixed, epoch=epoch)
