import numpy as np
import pytest

from croc.errors import ConfigError, DataError
from croc.graph import (MultiRelationGraph, load_graph, load_labels,
                        node_coverage, save_graph, save_labels, split_nodes)
from helpers import bfs_cover, union_adjacency_sets


def write_csv(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def test_load_symmetrizes_and_counts_arcs(tmp_path):
    write_csv(tmp_path / "edges.csv", [(0, 1), (1, 2)])
    write_csv(tmp_path / "feat.csv", [(0.5, 1.0), (1.5, 2.0), (2.5, 3.0)])
    g = load_graph([tmp_path / "edges.csv"], tmp_path / "feat.csv")
    assert g.num_nodes == 3 and g.num_relations == 1
    assert g.adjacency[0].num_arcs == 4
    assert g.edge_counts == [2]


def test_load_rejects_out_of_range_index(tmp_path):
    write_csv(tmp_path / "edges.csv", [(5, 0)])
    write_csv(tmp_path / "feat.csv", [(1.0,), (2.0,), (3.0,)])
    with pytest.raises(DataError):
        load_graph([tmp_path / "edges.csv"], tmp_path / "feat.csv")


def test_duplicate_edges_collapse(tmp_path):
    write_csv(tmp_path / "a.csv", [(0, 1), (0, 1), (1, 0)])
    write_csv(tmp_path / "b.csv", [(0, 1)])
    write_csv(tmp_path / "feat.csv", [(1.0,), (2.0,)])
    g1 = load_graph([tmp_path / "a.csv"], tmp_path / "feat.csv")
    g2 = load_graph([tmp_path / "b.csv"], tmp_path / "feat.csv")
    np.testing.assert_array_equal(g1.adjacency[0].src, g2.adjacency[0].src)
    np.testing.assert_array_equal(g1.adjacency[0].dst, g2.adjacency[0].dst)


def test_non_numeric_feature_rejected(tmp_path):
    (tmp_path / "feat.csv").write_text("1.0,2.0\n1.0,oops\n")
    write_csv(tmp_path / "edges.csv", [(0, 1)])
    with pytest.raises(DataError):
        load_graph([tmp_path / "edges.csv"], tmp_path / "feat.csv")


def test_header_rows_are_tolerated(tmp_path):
    (tmp_path / "edges.csv").write_text("src,dst\n0,1\n")
    (tmp_path / "feat.csv").write_text("1.5\n2.5\n")
    g = load_graph([tmp_path / "edges.csv"], tmp_path / "feat.csv")
    assert g.adjacency[0].num_arcs == 2


@pytest.mark.parametrize("binary", [True, False])
def test_save_load_round_trip(tmp_path, binary):
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((20, 5))
    if binary:
        feats = feats.astype(np.float32).astype(np.float64)  # on the storage grid
    edges = [rng.integers(0, 20, size=(30, 2)), rng.integers(0, 20, size=(10, 2))]
    g = MultiRelationGraph.from_edge_lists(edges, feats)
    paths = [tmp_path / "r0.csv", tmp_path / "r1.csv"]
    fpath = tmp_path / ("f.bin" if binary else "f.csv")
    save_graph(g, paths, fpath, binary_features=binary)
    g2 = load_graph(paths, fpath)
    np.testing.assert_array_equal(g.features, g2.features)
    for a, b in zip(g.adjacency, g2.adjacency):
        np.testing.assert_array_equal(a.src, b.src)
        np.testing.assert_array_equal(a.dst, b.dst)
    assert g.edge_counts == g2.edge_counts


def test_feature_bin_truncation_detected(tmp_path):
    feats = np.ones((4, 3))
    g = MultiRelationGraph.from_edge_lists([np.zeros((0, 2), np.int64)], feats)
    save_graph(g, [tmp_path / "r.csv"], tmp_path / "f.bin")
    blob = (tmp_path / "f.bin").read_bytes()
    (tmp_path / "f.bin").write_bytes(blob[:-4])
    with pytest.raises(DataError):
        load_graph([tmp_path / "r.csv"], tmp_path / "f.bin")


def test_labels_round_trip_and_missing_detection(tmp_path):
    labels = np.array([0, 1, 0, 1])
    save_labels(tmp_path / "labels.csv", labels)
    np.testing.assert_array_equal(load_labels(tmp_path / "labels.csv", 4), labels)
    with pytest.raises(DataError):
        load_labels(tmp_path / "labels.csv", 5)  # row-count mismatch


def test_split_proportions_exact_case():
    labels = np.zeros(300, np.int64)
    ls = split_nodes(labels, 0.01, seed=42)
    assert int(ls.train_mask.sum()) == 3
    assert int(ls.val_mask.sum()) == 99
    assert int(ls.test_mask.sum()) == 198


def test_split_deterministic():
    labels = np.random.default_rng(0).integers(0, 2, 120)
    a = split_nodes(labels, 0.1, seed=7)
    b = split_nodes(labels, 0.1, seed=7)
    np.testing.assert_array_equal(a.train_mask, b.train_mask)
    np.testing.assert_array_equal(a.val_mask, b.val_mask)
    np.testing.assert_array_equal(a.test_mask, b.test_mask)


def test_split_zero_train_rejected():
    with pytest.raises(ConfigError):
        split_nodes(np.zeros(100, np.int64), 0.001, seed=0)


def test_split_proportion_property():
    rng = np.random.default_rng(1)
    for _ in range(25):
        n = int(rng.integers(20, 400))
        labels = rng.integers(0, 2, n)
        rate = float(rng.uniform(0.01, 0.3))
        if int(round(rate * n)) == 0 or n - int(round(rate * n)) < 3:
            continue
        ls = split_nodes(labels, rate, seed=int(rng.integers(1000)))
        n_train = int(ls.train_mask.sum())
        rest = n - n_train
        assert abs(int(ls.val_mask.sum()) - round(rest / 3)) <= 1
        assert int(ls.test_mask.sum()) == rest - int(ls.val_mask.sum())
        assert not (ls.train_mask & (ls.val_mask | ls.test_mask)).any()
        assert (ls.train_mask | ls.val_mask | ls.test_mask).all()


def test_stratified_split_keeps_minority_class():
    labels = np.zeros(500, np.int64)
    labels[:10] = 1  # 2% anomalies
    for seed in range(5):
        ls = split_nodes(labels, 0.01, seed=seed, stratified=True)
        assert labels[ls.train_mask].sum() >= 1


def test_coverage_zero_hops_is_labeled_fraction():
    g = MultiRelationGraph.from_edge_lists(
        [np.array([[0, 1], [1, 2], [2, 3]])], np.zeros((6, 2)))
    rep = node_coverage(g, np.array([0, 5]), 0)
    assert rep.covered_count == 2
    assert rep.fraction == 2 / 6


def test_coverage_star_graph_one_hop():
    star = np.array([[0, i] for i in range(1, 8)])
    g = MultiRelationGraph.from_edge_lists([star], np.zeros((8, 1)))
    rep = node_coverage(g, np.array([0]), 1)
    assert rep.fraction == 1.0


def test_coverage_matches_bfs_oracle_on_random_graphs():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(20, 201))
        edge_lists = [rng.integers(0, n, size=(int(rng.integers(0, 3 * n)), 2))
                      for _ in range(int(rng.integers(1, 4)))]
        g = MultiRelationGraph.from_edge_lists(edge_lists, np.zeros((n, 1)))
        labeled = rng.choice(n, size=int(rng.integers(1, max(2, n // 10))), replace=False)
        k = int(rng.integers(0, 4))
        rep = node_coverage(g, labeled, k)
        oracle = bfs_cover(union_adjacency_sets(g), labeled, k)
        assert rep.covered_count == len(oracle)


def test_coverage_monotone_in_hops_and_labeled_set():
    rng = np.random.default_rng(3)
    n = 150
    g = MultiRelationGraph.from_edge_lists(
        [rng.integers(0, n, size=(200, 2)), rng.integers(0, n, size=(120, 2))],
        np.zeros((n, 1)))
    small = rng.choice(n, size=4, replace=False)
    large = np.unique(np.concatenate([small, rng.choice(n, size=6)]))
    prev = -1.0
    for k in range(5):
        frac = node_coverage(g, small, k).fraction
        assert frac >= prev
        prev = frac
        assert node_coverage(g, large, k).fraction >= frac


def test_graph_arrays_immutable():
    g = MultiRelationGraph.from_edge_lists([np.array([[0, 1]])], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        g.features[0, 0] = 1.0
    with pytest.raises(ValueError):
        g.adjacency[0].src[0] = 1
