"""Multi-relation graph storage, file ingestion, data splits, and hop coverage.

A graph is immutable after construction: node features plus one CSR adjacency
per relation, canonicalized (symmetrized, deduplicated, arcs sorted by
destination then source) so that downstream reductions have a fixed order
regardless of input file row order.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

FEATURE_MAGIC = b"CRGF"
FEATURE_VERSION = 1


@dataclass
class CsrAdjacency:
    """Incoming arcs of one relation, grouped by destination node.

    ``src[indptr[v]:indptr[v+1]]`` are the neighbors sending into v; ``dst`` is
    the flat arc-to-destination map aligned with ``src``.
    """

    indptr: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    @classmethod
    def from_arcs(cls, src: np.ndarray, dst: np.ndarray, num_nodes: int) -> "CsrAdjacency":
        """Build from arcs already sorted by (dst, src)."""
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=num_nodes), out=indptr[1:])
        return cls(indptr=indptr, src=src, dst=dst)

    @property
    def num_arcs(self) -> int:
        return int(self.src.shape[0])

    def neighbors(self, v: int) -> np.ndarray:
        return self.src[self.indptr[v]:self.indptr[v + 1]]


class MultiRelationGraph:
    """Node features plus R per-relation adjacency structures."""

    def __init__(self, features: np.ndarray, adjacency: list[CsrAdjacency],
                 edge_counts: list[int], symmetric: bool = True):
        self.features = np.asarray(features, dtype=np.float64)
        self.adjacency = adjacency
        self.edge_counts = list(edge_counts)
        self.symmetric = symmetric
        if self.features.ndim != 2:
            raise DataError("feature matrix must be 2-d")
        if not np.isfinite(self.features).all():
            raise DataError("feature matrix contains non-finite entries")
        arrays = [self.features]
        for r in adjacency:
            arrays += [r.indptr, r.src, r.dst]
        for arr in arrays:
            arr.flags.writeable = False

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_relations(self) -> int:
        return len(self.adjacency)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_arcs(self) -> int:
        return sum(rel.num_arcs for rel in self.adjacency)

    def in_degrees(self) -> np.ndarray:
        """Incoming arc count per node, summed over all relations."""
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for rel in self.adjacency:
            deg += np.diff(rel.indptr)
        return deg

    @classmethod
    def from_edge_lists(cls, edge_lists: list[np.ndarray], features: np.ndarray,
                        symmetrize: bool = True) -> "MultiRelationGraph":
        """Build a validated graph from per-relation (M, 2) endpoint arrays.

        Edges are symmetrized (unless ``symmetrize`` is off), duplicates within a
        relation collapse to a single arc, and arcs are sorted by (dst, src).
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DataError("feature matrix must be 2-d")
        n = features.shape[0]
        adjacency = []
        edge_counts = []
        for r, pairs in enumerate(edge_lists):
            pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
                bad = pairs[(pairs < 0).any(axis=1) | (pairs >= n).any(axis=1)][0]
                raise DataError(
                    f"relation {r}: edge ({bad[0]},{bad[1]}) references a node "
                    f"outside 0..{n - 1}"
                )
            if symmetrize and pairs.size:
                pairs = np.vstack([pairs, pairs[:, ::-1]])
            # Dedup and canonical (dst, src) arc order in one pass.
            keys = pairs[:, 1] * n + pairs[:, 0] if pairs.size else np.empty(0, np.int64)
            keys = np.unique(keys)
            src = keys % n
            dst = keys // n
            adjacency.append(CsrAdjacency.from_arcs(src, dst, n))
            loops = int((src == dst).sum())
            edge_counts.append((len(src) + loops) // 2 if symmetrize else len(src))
        return cls(features, adjacency, edge_counts, symmetric=symmetrize)


def load_features(path) -> np.ndarray:
    """Read node features from CSV or the binary CRGF container."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == FEATURE_MAGIC:
        return _read_feature_bin(path)
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if i == 0 and not _is_numeric_row(row):
                continue  # optional header
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise DataError(f"{path}: non-numeric feature value on row {i}") from None
    if not rows:
        raise DataError(f"{path}: empty feature file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: inconsistent feature row widths {sorted(widths)}")
    return np.asarray(rows, dtype=np.float64)


def _is_numeric_row(row) -> bool:
    try:
        [float(x) for x in row]
        return True
    except ValueError:
        return False


def _read_feature_bin(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise DataError(f"{path}: bad feature file magic")
        version, n, d0 = struct.unpack("<HQI", fh.read(14))
        if version != FEATURE_VERSION:
            raise DataError(f"{path}: unsupported feature format version {version}")
        raw = fh.read(4 * n * d0)
        if len(raw) != 4 * n * d0:
            raise DataError(f"{path}: truncated feature payload")
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, d0)


def save_features(path, features: np.ndarray, binary: bool = True) -> None:
    """Write features as CRGF (float32 storage) or full-precision CSV."""
    features = np.asarray(features)
    if binary:
        n, d0 = features.shape
        with open(path, "wb") as fh:
            fh.write(FEATURE_MAGIC)
            fh.write(struct.pack("<HQI", FEATURE_VERSION, n, d0))
            fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in features:
                writer.writerow([f"{x:.17g}" for x in row])


def load_edge_file(path) -> np.ndarray:
    """Read one relation's edges from a `src,dst` CSV."""
    pairs = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if i == 0 and not _is_numeric_row(row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}: row {i} does not have exactly 2 columns")
            try:
                pairs.append((int(row[0]), int(row[1])))
            except ValueError:
                raise DataError(f"{path}: non-integer node index on row {i}") from None
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def load_graph(edge_files: list, feature_file, symmetrize: bool = True) -> MultiRelationGraph:
    """Load a validated multi-relation graph, one edge CSV per relation."""
    features = load_features(feature_file)
    edge_lists = [load_edge_file(p) for p in edge_files]
    return MultiRelationGraph.from_edge_lists(edge_lists, features, symmetrize=symmetrize)


def save_graph(graph: MultiRelationGraph, edge_files: list, feature_file,
               binary_features: bool = True) -> None:
    """Write a graph back out in the load_graph formats.

    For symmetric graphs each undirected edge is written once (src <= dst).
    """
    if len(edge_files) != graph.num_relations:
        raise ValueError("need one edge path per relation")
    for rel, path in zip(graph.adjacency, edge_files):
        if graph.symmetric:
            keep = rel.src <= rel.dst
            pairs = np.stack([rel.src[keep], rel.dst[keep]], axis=1)
        else:
            pairs = np.stack([rel.src, rel.dst], axis=1)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for u, v in pairs:
                writer.writerow([int(u), int(v)])
    save_features(feature_file, graph.features, binary=binary_features)


def load_labels(path, num_nodes: int) -> np.ndarray:
    """Read a `node_id,label` CSV into a dense 0/1 vector."""
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if i == 0 and not _is_numeric_row(row):
                continue
            try:
                node, label = int(row[0]), int(row[1])
            except ValueError:
                raise DataError(f"{path}: non-integer entry on row {i}") from None
            if not 0 <= node < num_nodes:
                raise DataError(f"{path}: node id {node} out of range on row {i}")
            labels[node] = label
    if (labels < 0).any():
        missing = int((labels < 0).sum())
        raise DataError(f"{path}: labels missing for {missing} nodes (row-count mismatch)")
    return labels


def save_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, y in enumerate(labels):
            writer.writerow([i, int(y)])


@dataclass
class LabelSet:
    """Binary node labels with disjoint train/val/test masks."""

    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        for m in (self.train_mask, self.val_mask, self.test_mask):
            if m.shape != (n,) or m.dtype != np.bool_:
                raise DataError("masks must be boolean vectors of length N")
        overlap = (self.train_mask & self.val_mask) | \
                  (self.train_mask & self.test_mask) | \
                  (self.val_mask & self.test_mask)
        if overlap.any():
            raise DataError("train/val/test masks overlap")

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    @property
    def unlabeled_mask(self) -> np.ndarray:
        """Every node outside the labeled training set."""
        return ~self.train_mask


def split_nodes(labels: np.ndarray, label_rate: float, seed: int,
                stratified: bool = False) -> LabelSet:
    """Sample a training set and split the rest 1:2 into validation and test.

    Training nodes are sampled uniformly at random by default; ``stratified``
    preserves the class ratio (at least one node per present class), for
    low-anomaly regimes where a uniform draw may miss the anomalous class
    entirely. Deterministic given the seed.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if not 0.0 < label_rate < 1.0:
        raise ConfigError(f"label_rate must be in (0, 1), got {label_rate}")
    n_train = int(round(label_rate * n))
    if n_train == 0:
        raise ConfigError(f"label_rate {label_rate} yields zero training nodes for N={n}")
    if n - n_train < 3:
        raise ConfigError("fewer than 3 nodes would remain for validation and test")

    rng = np.random.default_rng(seed)
    if stratified:
        pos = np.flatnonzero(labels == 1)
        neg = np.flatnonzero(labels != 1)
        n_pos = int(round(n_train * len(pos) / n))
        if len(pos) and n_train >= 2:
            n_pos = min(max(n_pos, 1), len(pos), n_train - 1)
        n_neg = n_train - n_pos
        train_idx = np.concatenate([
            rng.choice(pos, size=n_pos, replace=False) if n_pos else np.empty(0, np.int64),
            rng.choice(neg, size=n_neg, replace=False),
        ]).astype(np.int64)
    else:
        train_idx = rng.choice(n, size=n_train, replace=False)

    train_mask = np.zeros(n, dtype=bool)
    train_mask[train_idx] = True
    rest = np.flatnonzero(~train_mask)
    rest = rng.permutation(rest)
    n_val = int(round(len(rest) / 3))
    val_mask = np.zeros(n, dtype=bool)
    val_mask[rest[:n_val]] = True
    test_mask = np.zeros(n, dtype=bool)
    test_mask[rest[n_val:]] = True
    return LabelSet(labels=labels, train_mask=train_mask,
                    val_mask=val_mask, test_mask=test_mask)


@dataclass
class CoverageReport:
    hops: int
    covered_count: int
    fraction: float


def node_coverage(graph: MultiRelationGraph, labeled, k: int) -> CoverageReport:
    """Fraction of nodes within k hops of any labeled node, over all relations.

    Hop expansion follows the union of every relation's adjacency, since
    message passing traverses all relations; the labeled nodes themselves
    count as covered at k = 0.
    """
    if k < 0:
        raise ValueError("hop count must be non-negative")
    n = graph.num_nodes
    labeled = np.asarray(labeled)
    if labeled.dtype == np.bool_:
        if labeled.shape != (n,):
            raise ValueError("boolean labeled mask must have length N")
        visited = labeled.copy()
    else:
        if labeled.size and (labeled.min() < 0 or labeled.max() >= n):
            raise ValueError("labeled node index out of range")
        visited = np.zeros(n, dtype=bool)
        visited[labeled] = True

    frontier = visited.copy()
    for _ in range(k):
        nxt = np.zeros(n, dtype=bool)
        for rel in graph.adjacency:
            hit = frontier[rel.src]
            nxt[rel.dst[hit]] = True
        nxt &= ~visited
        if not nxt.any():
            break
        visited |= nxt
        frontier = nxt
    covered = int(visited.sum())
    return CoverageReport(hops=k, covered_count=covered,
                          fraction=covered / n if n else 0.0)
