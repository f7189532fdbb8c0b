import numpy as np
import pytest

import croc.autodiff as ad
from croc.errors import NumericError
from croc.graph import MultiRelationGraph
from helpers import dense_neighbor_matmul, numeric_gradient


def fd_against(loss_builder, tracked, rel_tol=1e-6, step=1e-6):
    """Backward gradients of a scalar loss vs central differences, per input."""
    for var in tracked:
        var.grad = None
    tape = ad.Tape()
    loss = loss_builder(tape)
    tape.backward(loss)
    for var in tracked:
        def f(v=var):
            t = ad.Tape(enabled=False)
            return float(loss_builder(t).value)
        fd = numeric_gradient(f, var.value, step=step)
        denom = np.maximum(np.maximum(np.abs(var.grad), np.abs(fd)), 1e-6)
        assert (np.abs(var.grad - fd) / denom).max() < rel_tol, var


def test_affine_identity_weight():
    rng = np.random.default_rng(0)
    x = ad.constant(rng.standard_normal((4, 3)))
    w = ad.Parameter("w", np.eye(3))
    b = ad.Parameter("b", np.zeros(3))
    out = ad.affine(ad.Tape(), x, w, b)
    np.testing.assert_array_equal(out.value, x.value)


def test_affine_zero_input_gives_bias_rows():
    w = ad.Parameter("w", np.random.default_rng(1).standard_normal((5, 3)))
    b = ad.Parameter("b", np.arange(5.0))
    out = ad.affine(ad.Tape(), ad.constant(np.zeros((2, 3))), w, b)
    np.testing.assert_array_equal(out.value, np.tile(np.arange(5.0), (2, 1)))


def test_affine_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    x = ad.Var(rng.standard_normal((3, 4)), track=True)
    w = ad.Parameter("w", rng.standard_normal((5, 4)))
    b = ad.Parameter("b", rng.standard_normal(5))
    coeffs = rng.standard_normal((3, 5))
    fd_against(lambda t: ad.sum_weighted(t, ad.affine(t, x, w, b), coeffs), [x, w, b])


def test_affine_shape_mismatch():
    with pytest.raises(ValueError):
        ad.affine(ad.Tape(), ad.constant(np.zeros((2, 3))),
                  ad.Parameter("w", np.zeros((4, 5))))


def test_relu_values():
    out = ad.relu(ad.Tape(), ad.constant(np.array([[-1.0, 0.0, 2.0]])))
    np.testing.assert_array_equal(out.value, [[0.0, 0.0, 2.0]])


def test_relu_all_negative_zero_gradient():
    x = ad.Var(-np.ones((2, 3)), track=True)
    tape = ad.Tape()
    loss = ad.sum_weighted(tape, ad.relu(tape, x), np.ones((2, 3)))
    tape.backward(loss)
    assert float(loss.value) == 0.0
    np.testing.assert_array_equal(x.grad, np.zeros((2, 3)))


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((4, 6))
    vals[np.abs(vals) < 1e-3] = 0.5  # keep clear of the kink
    x = ad.Var(vals, track=True)
    coeffs = rng.standard_normal((4, 6))
    fd_against(lambda t: ad.sum_weighted(t, ad.relu(t, x), coeffs), [x])


def test_concat_values_and_zero_width():
    a = ad.constant(np.ones((2, 1)))
    b = ad.constant(np.full((2, 2), 2.0))
    out = ad.concat_cols(ad.Tape(), a, b)
    np.testing.assert_array_equal(out.value, [[1, 2, 2], [1, 2, 2]])
    same = ad.concat_cols(ad.Tape(), a, ad.constant(np.zeros((2, 0))))
    np.testing.assert_array_equal(same.value, a.value)


def test_concat_backward_partitions_gradient():
    rng = np.random.default_rng(4)
    a = ad.Var(rng.standard_normal((3, 2)), track=True)
    b = ad.Var(rng.standard_normal((3, 4)), track=True)
    coeffs = rng.standard_normal((3, 6))
    fd_against(lambda t: ad.sum_weighted(t, ad.concat_cols(t, a, b), coeffs), [a, b])


def test_concat_row_mismatch():
    with pytest.raises(ValueError):
        ad.concat_cols(ad.Tape(), ad.constant(np.zeros((2, 1))),
                       ad.constant(np.zeros((3, 1))))


def test_neighbor_sum_no_arcs_is_zero_row():
    out = ad.neighbor_sum(ad.Tape(), ad.constant(np.zeros((0, 3))),
                          np.empty(0, np.int64), 1)
    np.testing.assert_array_equal(out.value, np.zeros((1, 3)))


def test_neighbor_sum_duplicate_messages_double():
    m = np.array([[1.5, -2.0]])
    out = ad.neighbor_sum(ad.Tape(), ad.constant(np.vstack([m, m])),
                          np.array([0, 0]), 2)
    np.testing.assert_array_equal(out.value[0], 2 * m[0])
    np.testing.assert_array_equal(out.value[1], 0.0)


def test_neighbor_sum_matches_dense_matmul_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(1, 21))
        arcs = int(rng.integers(0, 4 * n))
        dst = rng.integers(0, n, size=arcs)
        msgs = rng.standard_normal((arcs, 3))
        got = ad.neighbor_sum(ad.Tape(), ad.constant(msgs), dst, n)
        want = dense_neighbor_matmul(msgs, dst, n)
        np.testing.assert_allclose(got.value, want, rtol=0, atol=1e-12)


def test_neighbor_sum_gradients_and_bounds():
    rng = np.random.default_rng(6)
    msgs = ad.Var(rng.standard_normal((7, 2)), track=True)
    dst = rng.integers(0, 4, size=7)
    coeffs = rng.standard_normal((4, 2))
    fd_against(lambda t: ad.sum_weighted(t, ad.neighbor_sum(t, msgs, dst, 4), coeffs),
               [msgs])
    with pytest.raises(ValueError):
        ad.neighbor_sum(ad.Tape(), msgs, np.array([0, 1, 2, 3, 4, 5, 9]), 4)


def test_relation_aggregate_equals_composed_ops():
    rng = np.random.default_rng(7)
    n, arcs, f = 9, 30, 5
    graph_src = rng.integers(0, n, arcs)
    graph_dst = np.sort(rng.integers(0, n, arcs))
    transformed = ad.Var(rng.standard_normal((n, f)), track=True)
    rel_row = ad.Parameter("rel", rng.standard_normal((1, f)))

    tape = ad.Tape()
    fused = ad.relation_aggregate(tape, transformed, rel_row, graph_src, graph_dst, n)
    t2 = ad.Tape()
    msgs = ad.relation_messages(t2, transformed, rel_row, graph_src)
    composed = ad.neighbor_sum(t2, msgs, graph_dst, n)
    np.testing.assert_array_equal(fused.value, composed.value)

    coeffs = rng.standard_normal((n, f))
    fd_against(lambda t: ad.sum_weighted(
        t, ad.relation_aggregate(t, transformed, rel_row, graph_src, graph_dst, n),
        coeffs), [transformed, rel_row], rel_tol=1e-5)


def test_relation_messages_gradients():
    rng = np.random.default_rng(8)
    transformed = ad.Var(rng.standard_normal((6, 4)) + 0.3, track=True)
    rel_row = ad.Parameter("rel", rng.standard_normal((1, 4)))
    src = rng.integers(0, 6, 14)
    coeffs = rng.standard_normal((14, 4))
    fd_against(lambda t: ad.sum_weighted(
        t, ad.relation_messages(t, transformed, rel_row, src), coeffs),
        [transformed, rel_row], rel_tol=1e-5)


def test_gather_rows_gradients():
    rng = np.random.default_rng(9)
    x = ad.Var(rng.standard_normal((5, 3)), track=True)
    idx = np.array([0, 2, 2, 4])
    coeffs = rng.standard_normal((4, 3))
    fd_against(lambda t: ad.sum_weighted(t, ad.gather_rows(t, x, idx), coeffs), [x])


def test_softmax_symmetry_and_closed_form():
    out = ad.softmax_rows(ad.Tape(), ad.constant(np.array([[0.0, 0.0]])))
    np.testing.assert_allclose(out.value, [[0.5, 0.5]], atol=1e-15)
    shifted = ad.softmax_rows(ad.Tape(), ad.constant(np.array([[5.0, 5.0]])))
    np.testing.assert_array_equal(out.value, shifted.value)
    logs = ad.softmax_rows(ad.Tape(), ad.constant(np.log(np.array([[1.0, 3.0]]))))
    np.testing.assert_allclose(logs.value, [[0.25, 0.75]], atol=1e-15)


def test_softmax_rows_sum_to_one_and_reject_nan():
    rng = np.random.default_rng(10)
    out = ad.softmax_rows(ad.Tape(), ad.constant(rng.standard_normal((20, 4)) * 30))
    np.testing.assert_allclose(out.value.sum(axis=1), np.ones(20), atol=1e-12)
    with pytest.raises(NumericError):
        ad.softmax_rows(ad.Tape(), ad.constant(np.array([[np.nan, 0.0]])))


def test_softmax_gradients():
    rng = np.random.default_rng(11)
    x = ad.Var(rng.standard_normal((3, 4)), track=True)
    coeffs = rng.standard_normal((3, 4))
    fd_against(lambda t: ad.sum_weighted(t, ad.softmax_rows(t, x), coeffs), [x])


def test_masked_nll_closed_forms():
    probs = ad.constant(np.array([[1.0, 0.0], [0.5, 0.5], [0.75, 0.25]]))
    classes = np.array([0, 1, 1])
    perfect = ad.masked_nll(ad.Tape(), probs, classes, np.array([True, False, False]))
    assert float(perfect.value) == 0.0
    uniform = ad.masked_nll(ad.Tape(), probs, classes, np.array([False, True, False]))
    assert abs(float(uniform.value) - np.log(2.0)) < 1e-15
    quarter = ad.masked_nll(ad.Tape(), probs, classes, np.array([False, False, True]))
    assert abs(float(quarter.value) - np.log(4.0)) < 1e-15
    with pytest.raises(ValueError):
        ad.masked_nll(ad.Tape(), probs, classes, np.zeros(3, bool))


def test_masked_nll_gradients():
    rng = np.random.default_rng(12)
    raw = rng.uniform(0.2, 0.8, size=(5, 2))
    x = ad.Var(raw / raw.sum(axis=1, keepdims=True), track=True)
    classes = rng.integers(0, 2, 5)
    mask = np.array([True, False, True, True, False])
    fd_against(lambda t: ad.masked_nll(t, x, classes, mask), [x])


def test_rowwise_dot_gradients():
    rng = np.random.default_rng(13)
    a = ad.Var(rng.standard_normal((4, 3)), track=True)
    b = ad.Var(rng.standard_normal((4, 3)), track=True)
    coeffs = rng.standard_normal(4)
    fd_against(lambda t: ad.sum_weighted(t, ad.rowwise_dot(t, a, b), coeffs), [a, b])


def test_contrast_reduce_closed_forms():
    # one negative with the same similarity as the positive: log(1) = 0
    pos = ad.constant(np.array([1.3]))
    negs = ad.constant(np.array([[1.3]]))
    out = ad.contrast_reduce(ad.Tape(), pos, negs, tau=2.0)
    assert abs(float(out.value)) < 1e-15
    # k equal negatives: log k
    negs5 = ad.constant(np.full((1, 5), 1.3))
    out5 = ad.contrast_reduce(ad.Tape(), pos, negs5, tau=2.0)
    assert abs(float(out5.value) - np.log(5.0)) < 1e-12


def test_contrast_reduce_scale_invariance():
    rng = np.random.default_rng(14)
    p = rng.standard_normal(6)
    n = rng.standard_normal((6, 4))
    a = ad.contrast_reduce(ad.Tape(), ad.constant(p), ad.constant(n), tau=2.0)
    b = ad.contrast_reduce(ad.Tape(), ad.constant(3.0 * p), ad.constant(3.0 * n), tau=6.0)
    assert abs(float(a.value) - float(b.value)) < 1e-12


@pytest.mark.parametrize("include_positive", [False, True])
def test_contrast_reduce_gradients(include_positive):
    rng = np.random.default_rng(15)
    pos = ad.Var(rng.standard_normal(5), track=True)
    negs = ad.Var(rng.standard_normal((5, 3)), track=True)
    fd_against(lambda t: ad.contrast_reduce(t, pos, negs, tau=2.0,
                                            include_positive=include_positive),
               [pos, negs])


def test_contrast_similarities_values_and_gradients():
    rng = np.random.default_rng(16)
    h = ad.Var(rng.standard_normal((8, 4)), track=True)
    hp = ad.Var(rng.standard_normal((8, 4)), track=True)
    anchors = np.array([1, 3, 6])
    neg_idx = np.array([[0, 2], [5, 5], [7, 0]])
    pos, negs = ad.contrast_similarities(ad.Tape(), h, hp, anchors, neg_idx)
    np.testing.assert_allclose(pos.value, (h.value[anchors] * hp.value[anchors]).sum(1))
    np.testing.assert_allclose(
        negs.value, np.einsum("md,mkd->mk", h.value[anchors], h.value[neg_idx]))

    fd_against(lambda t: ad.contrast_reduce(
        t, *ad.contrast_similarities(t, h, hp, anchors, neg_idx), tau=2.0), [h, hp])


def test_scale_ops_gradients():
    rng = np.random.default_rng(17)
    x = ad.Var(rng.standard_normal((4, 3)), track=True)
    s = ad.Parameter("eps", np.asarray(0.2))
    w = rng.uniform(0.5, 2.0, 4)
    coeffs = rng.standard_normal((4, 3))
    fd_against(lambda t: ad.sum_weighted(t, ad.scale(t, x, 1.7), coeffs), [x])
    fd_against(lambda t: ad.sum_weighted(t, ad.scale_rows(t, x, w), coeffs), [x])
    fd_against(lambda t: ad.sum_weighted(t, ad.scale_one_plus(t, x, s), coeffs), [x, s])


def test_reshape_and_normalize_gradients():
    rng = np.random.default_rng(18)
    x = ad.Var(rng.standard_normal((3, 4)) + 0.5, track=True)
    coeffs = rng.standard_normal((12,))
    fd_against(lambda t: ad.sum_weighted(t, ad.reshape(t, x, (12,)), coeffs), [x])
    coeffs2 = rng.standard_normal((3, 4))
    fd_against(lambda t: ad.sum_weighted(t, ad.normalize_rows(t, x), coeffs2), [x])


def test_combine_scalars_matches_float_arithmetic():
    a = ad.constant(np.asarray(0.5))
    b = ad.constant(np.asarray(0.4))
    c = ad.constant(np.asarray(0.3))
    out = ad.combine_scalars(ad.Tape(), [(a, 1.0), (b, 0.5), (c, 0.2)])
    assert float(out.value) == 0.5 + 0.5 * 0.4 + 0.2 * 0.3


def test_backward_twice_doubles_and_zero_resets():
    rng = np.random.default_rng(19)
    w = ad.Parameter("w", rng.standard_normal((3, 3)))
    x = ad.constant(rng.standard_normal((2, 3)))
    tape = ad.Tape()
    loss = ad.sum_weighted(tape, ad.affine(tape, x, w), np.ones((2, 3)))
    tape.backward(loss)
    once = w.grad.copy()
    tape.backward(loss)
    np.testing.assert_array_equal(w.grad, 2.0 * once)
    w.zero_grad()
    np.testing.assert_array_equal(w.grad, np.zeros_like(once))


def test_disabled_tape_records_nothing():
    tape = ad.Tape(enabled=False)
    out = ad.relu(tape, ad.constant(np.ones((2, 2))))
    assert len(tape) == 0
    with pytest.raises(RuntimeError):
        tape.backward(out)


def test_grad_check_linear_loss_is_exact():
    rng = np.random.default_rng(20)
    w = ad.Parameter("w", rng.standard_normal(6))
    x = rng.standard_normal(6)

    def loss_fn():
        w.zero_grad()
        w.grad = x.copy()
        return float(w.value @ x)

    errors = ad.grad_check(loss_fn, [w])
    assert errors["w"] < 1e-10


def test_grad_check_flags_corrupted_gradient():
    rng = np.random.default_rng(21)
    w = ad.Parameter("w", rng.standard_normal(4))
    x = rng.standard_normal(4)

    def loss_fn():
        w.zero_grad()
        w.grad = x + 0.1
        return float(w.value @ x)

    errors = ad.grad_check(loss_fn, [w])
    assert errors["w"] > 1e-4


def test_grad_check_rejects_non_finite_loss():
    w = ad.Parameter("w", np.ones(2))

    def loss_fn():
        w.grad = np.zeros(2)
        return float("nan")

    with pytest.raises(NumericError):
        ad.grad_check(loss_fn, [w])


def test_model_arc_order_canonicalization_gives_identical_embeddings():
    # Permuting the storage order of input edges leaves H bitwise unchanged,
    # because construction canonicalizes arcs before any reduction runs.
    from croc.model import CrocModel

    rng = np.random.default_rng(22)
    feats = rng.standard_normal((10, 4))
    edges = rng.integers(0, 10, size=(15, 2))
    g1 = MultiRelationGraph.from_edge_lists([edges], feats)
    g2 = MultiRelationGraph.from_edge_lists([edges[rng.permutation(15)]], feats)
    model = CrocModel(num_relations=1, in_dim=4, hidden_dim=6, seed=0)
    h1 = model.embed(ad.Tape(enabled=False), g1)
    h2 = model.embed(ad.Tape(enabled=False), g2)
    np.testing.assert_array_equal(h1.value, h2.value)
