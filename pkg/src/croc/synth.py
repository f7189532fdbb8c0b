"""Synthetic multi-relation graphs with planted, optionally camouflaged anomalies.

Two levers mirror the evasion behaviors the detector must survive:

* feature camouflage: a configurable share of anomalies draw their features
  from the normal-class distribution instead of the anomalous one;
* behavior camouflage: anomalies spend part of their edge budget on planted
  cross-relation motifs (length-2 paths between two anomalies through a random
  intermediary, alternating relation types) hidden among benign background
  edges, with background degree thinned so expected degrees stay flat across
  classes.

Everything is a pure function of the config, so equal configs give bitwise
equal graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError
from .graph import MultiRelationGraph


@dataclass
class SynthConfig:
    num_nodes: int = 2000
    num_relations: int = 2
    anomaly_ratio: float = 0.05
    feature_dim: int = 16
    camouflage_rate: float = 0.5
    mean_degree: float = 6.0
    anomaly_motif_strength: float = 0.5
    class_separation: float = 3.0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.anomaly_ratio < 0.5:
            raise ConfigError(f"anomaly_ratio must be in (0, 0.5), got {self.anomaly_ratio}")
        if not 0.0 <= self.camouflage_rate <= 1.0:
            raise ConfigError(f"camouflage_rate must be in [0, 1], got {self.camouflage_rate}")
        if not 0.0 <= self.anomaly_motif_strength <= 1.0:
            raise ConfigError("anomaly_motif_strength must be in [0, 1]")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be at least 1")
        if self.mean_degree < 1.0:
            raise ConfigError("mean_degree must be at least 1")
        if self.num_relations < 1:
            raise ConfigError("num_relations must be at least 1")
        if self.num_nodes < 4:
            raise ConfigError("num_nodes must be at least 4")

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_distinct_pairs(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """Sample m distinct unordered node pairs (u < v), no self-loops."""
    chosen: set[int] = set()
    pairs = []
    while len(pairs) < m:
        need = m - len(pairs)
        u = rng.integers(0, n, size=2 * need + 8)
        v = rng.integers(0, n, size=2 * need + 8)
        for a, b in zip(u, v):
            if a == b:
                continue
            lo, hi = (int(a), int(b)) if a < b else (int(b), int(a))
            key = lo * n + hi
            if key in chosen:
                continue
            chosen.add(key)
            pairs.append((lo, hi))
            if len(pairs) == m:
                break
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def generate(config: SynthConfig):
    """Generate a labeled graph; returns (MultiRelationGraph, labels array)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.num_nodes
    r_count = config.num_relations

    num_anom = int(round(config.anomaly_ratio * n))
    anom_idx = np.sort(rng.choice(n, size=num_anom, replace=False))
    labels = np.zeros(n, dtype=np.int64)
    labels[anom_idx] = 1

    n_cam = int(round(config.camouflage_rate * num_anom))
    cam_idx = rng.choice(anom_idx, size=n_cam, replace=False) if num_anom else np.empty(0, np.int64)
    revealed = np.setdiff1d(anom_idx, cam_idx)

    direction = rng.standard_normal(config.feature_dim)
    direction /= np.linalg.norm(direction)
    features = rng.standard_normal((n, config.feature_dim))
    features[revealed] += config.class_separation * direction

    # Background: per-relation Erdos-Renyi with the configured mean degree.
    edges_per_rel = []
    m_background = int(round(n * config.mean_degree / 2.0))
    for _ in range(r_count):
        edges_per_rel.append(_sample_distinct_pairs(rng, n, m_background))

    strength = config.anomaly_motif_strength
    plant_motifs = strength > 0.0 and num_anom >= 2
    if plant_motifs:
        # Thin background edges at anomalies so planted motif edges refill,
        # rather than inflate, their expected degree.
        is_anom = labels == 1
        thinned = []
        for pairs in edges_per_rel:
            keep_prob = np.where(is_anom[pairs[:, 0]], 1.0 - strength, 1.0)
            keep_prob = keep_prob * np.where(is_anom[pairs[:, 1]], 1.0 - strength, 1.0)
            thinned.append(pairs[rng.random(len(pairs)) < keep_prob])
        edges_per_rel = thinned

        edge_sets = [set(map(tuple, pairs)) for pairs in edges_per_rel]
        budget = strength * r_count * config.mean_degree  # motif edges per anomaly
        n_paths = int(round(num_anom * budget / 2.0))
        for _ in range(n_paths):
            a, b = rng.choice(anom_idx, size=2, replace=False)
            w = int(rng.integers(0, n))
            while w == a or w == b:
                w = int(rng.integers(0, n))
            if r_count >= 2:
                r1, r2 = rng.choice(r_count, size=2, replace=False)
            else:
                r1 = r2 = 0
            for node, rel in ((int(a), int(r1)), (int(b), int(r2))):
                lo, hi = (node, w) if node < w else (w, node)
                edge_sets[rel].add((lo, hi))
        edges_per_rel = [
            np.asarray(sorted(s), dtype=np.int64).reshape(-1, 2) for s in edge_sets
        ]

    graph = MultiRelationGraph.from_edge_lists(edges_per_rel, features, symmetrize=True)
    return graph, labels


@dataclass
class MotifAudit:
    """Mean per-node count of alternating cross-relation 2-paths, by class."""

    anomaly_rate: float
    normal_rate: float
    anomaly_count: int
    normal_count: int


def motif_audit(graph: MultiRelationGraph, labels: np.ndarray) -> MotifAudit:
    """Measure how often each class sits at the endpoint of a planted-style motif.

    For every node x, counts walks x -(r1)- w -(r2)- y with r1 != r2, i.e.
    length-2 paths leaving x that switch relation type at the intermediary.
    With no planted signal the two class rates coincide in expectation.
    """
    n = graph.num_nodes
    labels = np.asarray(labels)
    counts = np.zeros(n, dtype=np.float64)
    degs = [np.diff(rel.indptr).astype(np.float64) for rel in graph.adjacency]
    for r1, rel1 in enumerate(graph.adjacency):
        other = np.zeros(n, dtype=np.float64)
        for r2 in range(graph.num_relations):
            if r2 != r1:
                other += degs[r2]
        if rel1.num_arcs:
            counts += np.bincount(rel1.dst, weights=other[rel1.src], minlength=n)
    anom = labels == 1
    anomaly_count = int(anom.sum())
    normal_count = int(n - anomaly_count)
    return MotifAudit(
        anomaly_rate=float(counts[anom].mean()) if anomaly_count else 0.0,
        normal_rate=float(counts[~anom].mean()) if normal_count else 0.0,
        anomaly_count=anomaly_count,
        normal_count=normal_count,
    )
