"""Reverse-mode gradients over a recorded tape of coarse array operations.

The full training loss is built from a fixed vocabulary of ops: dense affine
maps, relu, column concatenation, row gather/scatter, arc-to-node reductions,
row softmax, masked negative log likelihood, rowwise dot products, and a
temperature contrast reduction. Each op appends one backward closure to the
tape; adjoints are hand-derived per op, which keeps the tape short and
auditable. There is no general broadcasting and no graph pruning; this is all
the fixed architecture needs.

Besides the generic ops there are fused arc kernels (``relation_messages``,
``segment_sum``, ``contrast_similarities``) that compute the same math with
fewer arc-sized temporaries; their adjoints are checked against finite
differences like everything else.

Backward passes propagate through pass-local adjoint buffers and only add the
final result into ``var.grad`` for vars constructed with ``track=True``
(parameters always are), so running backward twice doubles stored gradients
exactly and ``zero_grad`` resets them exactly.
"""

from __future__ import annotations

import numpy as np

from ._kernels import (arc_relu_gather, arc_relu_gather_bwd, index_add_rows,
                       relation_aggregate_bwd, relation_aggregate_fwd)
from .errors import NumericError


class Var:
    """A float64 array node in the computation graph.

    ``grad`` is only materialized for tracked vars; it accumulates additively
    across backward passes until explicitly zeroed.
    """

    __slots__ = ("value", "grad", "track")

    def __init__(self, value, track: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.track = track

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)


class Parameter(Var):
    """Named trainable array; always gradient-tracked."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value, track=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Tape:
    """Records backward closures during a forward pass and replays them in reverse.

    A disabled tape records nothing; forward values are still computed, which
    is what evaluation uses.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._steps = []

    def record(self, fn) -> None:
        if self.enabled:
            self._steps.append(fn)

    def __len__(self):
        return len(self._steps)

    def backward(self, out: Var) -> None:
        """Accumulate d(out)/d(var) into ``var.grad`` for tracked vars.

        ``out`` is seeded with ones. Adjoints live in a pass-local table and
        are added into ``.grad`` only at the end, never read from ``.grad``.
        """
        if not self.enabled:
            raise RuntimeError("cannot run backward on a disabled tape")
        adjoints: dict[Var, np.ndarray] = {out: np.ones_like(out.value)}
        for fn in reversed(self._steps):
            fn(adjoints)
        for var, g in adjoints.items():
            if not var.track:
                continue
            if var.grad is None:
                var.grad = np.array(g)  # own the buffer; g may be a view
            else:
                var.grad += g


def _acc(adjoints: dict, var: Var, g: np.ndarray) -> None:
    # Never add in place: the stored array may be a view into another adjoint.
    cur = adjoints.get(var)
    adjoints[var] = g if cur is None else cur + g


def constant(value) -> Var:
    """Wrap an array as an untracked leaf Var (records nothing)."""
    return Var(value)


def affine(tape: Tape, x: Var, weight: Parameter, bias: Parameter | None = None) -> Var:
    """out = x @ weight.T + bias, rows of x mapped through a dense affine layer."""
    if x.value.ndim != 2 or weight.value.ndim != 2:
        raise ValueError("affine expects 2-d input and weight")
    if x.value.shape[1] != weight.value.shape[1]:
        raise ValueError(
            f"affine shape mismatch: input width {x.value.shape[1]} "
            f"vs weight fan-in {weight.value.shape[1]}"
        )
    out_val = x.value @ weight.value.T
    if bias is not None:
        if bias.value.shape != (weight.value.shape[0],):
            raise ValueError("affine bias shape must match weight fan-out")
        out_val += bias.value
    out = Var(out_val)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, g @ weight.value)
        _acc(adjoints, weight, g.T @ x.value)
        if bias is not None:
            _acc(adjoints, bias, g.sum(axis=0))

    tape.record(bwd)
    return out


def relu(tape: Tape, x: Var) -> Var:
    """Elementwise max(0, x); subgradient at exactly 0 is 0."""
    out_val = np.maximum(x.value, 0.0)
    out = Var(out_val)
    mask = out_val > 0.0

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, g * mask)

    tape.record(bwd)
    return out


def concat_cols(tape: Tape, a: Var, b: Var) -> Var:
    """Columnwise concatenation of two row-aligned matrices."""
    if a.value.shape[0] != b.value.shape[0]:
        raise ValueError("concat_cols requires equal row counts")
    p = a.value.shape[1]
    out = Var(np.hstack([a.value, b.value]))

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, a, g[:, :p])
        _acc(adjoints, b, g[:, p:])

    tape.record(bwd)
    return out


def gather_rows(tape: Tape, x: Var, index: np.ndarray) -> Var:
    """out[i] = x[index[i]]; backward scatter-adds into the source rows."""
    index = np.asarray(index)
    out = Var(x.value[index])

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        buf = np.zeros_like(x.value)
        np.add.at(buf, index, g)
        _acc(adjoints, x, buf)

    tape.record(bwd)
    return out


def neighbor_sum(tape: Tape, messages: Var, dst_index: np.ndarray, num_nodes: int) -> Var:
    """Sum per-arc message rows into their destination nodes.

    ``dst_index`` is the arc-to-destination map of a CSR adjacency; nodes with
    no incoming arcs get zero rows. Summation follows arc storage order, so
    the reduction is bitwise deterministic for a fixed adjacency.
    """
    dst_index = np.asarray(dst_index)
    if messages.value.shape[0] != dst_index.shape[0]:
        raise ValueError("one message row per arc required")
    if dst_index.size and (dst_index.min() < 0 or dst_index.max() >= num_nodes):
        raise ValueError("arc destination index out of range")
    out = Var(index_add_rows(messages.value, dst_index, num_nodes))

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, messages, g[dst_index])

    tape.record(bwd)
    return out


def relation_messages(tape: Tape, transformed: Var, rel_row: Var | None, src: np.ndarray) -> Var:
    """Fused arc kernel: relu(transformed[src] + relation offset) per incoming arc.

    ``transformed`` holds node-level affine outputs; ``rel_row`` is the (1, F)
    offset of this relation (absent when relation awareness is off). Backward
    scatters the masked gradient to the source rows, accumulating in arc order.
    """
    src = np.asarray(src)
    n = transformed.value.shape[0]
    offset = rel_row.value.ravel() if rel_row is not None else None
    out = Var(arc_relu_gather(transformed.value, src, offset))

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        d_source, d_offset = arc_relu_gather_bwd(np.ascontiguousarray(g), out.value, src, n)
        _acc(adjoints, transformed, d_source)
        if rel_row is not None:
            _acc(adjoints, rel_row, d_offset[None, :])

    tape.record(bwd)
    return out


def relation_aggregate(tape: Tape, transformed: Var, rel_row: Var | None,
                       src: np.ndarray, dst: np.ndarray, num_nodes: int) -> Var:
    """Fused relation_messages + neighbor_sum without arc-sized float temporaries.

    out[v] = sum over arcs (u -> v) of relu(transformed[u] + relation offset),
    accumulated in arc storage order (bitwise equal to composing the two ops).
    Only the arc-level relu mask is kept for backward, and only on an enabled
    tape.
    """
    src = np.asarray(src)
    dst = np.asarray(dst)
    offset = rel_row.value.ravel() if rel_row is not None else None
    out_val, mask = relation_aggregate_fwd(transformed.value, src, dst, offset,
                                           num_nodes, want_mask=tape.enabled)
    out = Var(out_val)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        d_source, d_offset = relation_aggregate_bwd(g, mask, src, dst,
                                                    transformed.value.shape[0])
        _acc(adjoints, transformed, d_source)
        if rel_row is not None:
            _acc(adjoints, rel_row, d_offset[None, :])

    tape.record(bwd)
    return out


def add(tape: Tape, a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ValueError("add requires identical shapes")
    out = Var(a.value + b.value)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, a, g)
        _acc(adjoints, b, g)

    tape.record(bwd)
    return out


def scale(tape: Tape, x: Var, c: float) -> Var:
    """Multiply by a fixed scalar."""
    c = float(c)
    out = Var(c * x.value)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, c * g)

    tape.record(bwd)
    return out


def scale_rows(tape: Tape, x: Var, row_weights: np.ndarray) -> Var:
    """Multiply each row by a fixed per-row weight (used for degree-mean pooling)."""
    w = np.asarray(row_weights, dtype=np.float64)
    if w.shape != (x.value.shape[0],):
        raise ValueError("row_weights must have one entry per row")
    out = Var(x.value * w[:, None])

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, g * w[:, None])

    tape.record(bwd)
    return out


def scale_one_plus(tape: Tape, x: Var, s: Parameter) -> Var:
    """out = (1 + s) * x for a learnable scalar s."""
    if s.value.shape != ():
        raise ValueError("scale_one_plus expects a scalar parameter")
    factor = 1.0 + s.value
    out = Var(factor * x.value)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, factor * g)
        _acc(adjoints, s, np.asarray((g * x.value).sum()))

    tape.record(bwd)
    return out


def softmax_rows(tape: Tape, logits: Var) -> Var:
    """Row softmax, stabilized by row-max subtraction."""
    if np.isnan(logits.value).any():
        raise NumericError("softmax_rows received NaN logits")
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    out = Var(probs)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        inner = (g * probs).sum(axis=1, keepdims=True)
        _acc(adjoints, logits, probs * (g - inner))

    tape.record(bwd)
    return out


def masked_nll(tape: Tape, probs: Var, classes: np.ndarray, mask: np.ndarray,
               clamp: float = 1e-12) -> Var:
    """Mean over masked rows of -log(probs[row, classes[row]]).

    Probabilities are clamped at ``clamp`` before the log; below the clamp the
    subgradient is 0.
    """
    rows = np.flatnonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        raise ValueError("masked_nll requires a non-empty mask")
    cls = np.asarray(classes)[rows]
    picked = probs.value[rows, cls]
    clamped = np.maximum(picked, clamp)
    out = Var(-np.mean(np.log(clamped)))

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        grad_picked = np.where(picked > clamp, -1.0 / (clamped * rows.size), 0.0)
        buf = np.zeros_like(probs.value)
        np.add.at(buf, (rows, cls), float(g) * grad_picked)
        _acc(adjoints, probs, buf)

    tape.record(bwd)
    return out


def rowwise_dot(tape: Tape, a: Var, b: Var) -> Var:
    """Per-row inner products of two equal-shape matrices, returned as a vector."""
    if a.value.shape != b.value.shape:
        raise ValueError("rowwise_dot requires identical shapes")
    out = Var((a.value * b.value).sum(axis=1))

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, a, g[:, None] * b.value)
        _acc(adjoints, b, g[:, None] * a.value)

    tape.record(bwd)
    return out


def contrast_similarities(tape: Tape, h: Var, h_prime: Var, anchors: np.ndarray,
                          neg_idx: np.ndarray):
    """Fused similarity kernel for the node-wise contrast.

    Returns (pos, negs): pos[v] = h[anchor_v] . h_prime[anchor_v] and
    negs[v, i] = h[anchor_v] . h[neg_idx[v, i]]. ``anchors`` must be unique;
    negative indices may repeat.
    """
    anchors = np.asarray(anchors)
    neg_idx = np.asarray(neg_idx)
    if neg_idx.ndim != 2 or neg_idx.shape[0] != anchors.shape[0]:
        raise ValueError("neg_idx must be (num_anchors, k)")
    a_rows = h.value[anchors]
    p_rows = h_prime.value[anchors]
    n_rows = h.value[neg_idx]
    pos = Var((a_rows * p_rows).sum(axis=1))
    negs = Var(np.einsum("md,mkd->mk", a_rows, n_rows, optimize=True))

    def bwd(adjoints):
        gp = adjoints.get(pos)
        gn = adjoints.get(negs)
        if gp is None and gn is None:
            return
        d_anchor = np.zeros_like(a_rows)
        if gp is not None:
            d_anchor += gp[:, None] * p_rows
            dhp = np.zeros_like(h_prime.value)
            dhp[anchors] = gp[:, None] * a_rows  # anchors unique
            _acc(adjoints, h_prime, dhp)
        if gn is not None:
            d_anchor += np.einsum("mk,mkd->md", gn, n_rows, optimize=True)
            d_negs = gn[:, :, None] * a_rows[:, None, :]
            dh = index_add_rows(d_negs.reshape(-1, a_rows.shape[1]),
                                neg_idx.reshape(-1), h.value.shape[0])
        else:
            dh = np.zeros_like(h.value)
        dh[anchors] += d_anchor
        _acc(adjoints, h, dh)

    tape.record(bwd)
    return pos, negs


def contrast_reduce(tape: Tape, pos: Var, negs: Var, tau: float,
                    include_positive: bool = False) -> Var:
    """Temperature-scaled contrast of positive similarities against negatives.

    loss = -mean_v( pos_v / tau - log sum_i exp(negs_vi / tau) ); when
    ``include_positive`` is set the positive term joins the denominator sum,
    giving the standard normalized form.
    """
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    if pos.value.ndim != 1 or negs.value.ndim != 2 or negs.value.shape[0] != pos.value.shape[0]:
        raise ValueError("contrast_reduce expects pos (m,) and negs (m, k)")
    m = pos.value.shape[0]
    zp = pos.value / tau
    zn = negs.value / tau
    stacked = np.concatenate([zp[:, None], zn], axis=1) if include_positive else zn
    hi = stacked.max(axis=1, keepdims=True)
    e = np.exp(stacked - hi)
    denom = e.sum(axis=1, keepdims=True)
    lse = (hi + np.log(denom)).ravel()
    out = Var(-np.mean(zp - lse))
    soft = e / denom  # rowwise softmax over the denominator terms

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        gg = float(g) / (m * tau)
        if include_positive:
            _acc(adjoints, pos, gg * (soft[:, 0] - 1.0))
            _acc(adjoints, negs, gg * soft[:, 1:])
        else:
            _acc(adjoints, pos, np.full(m, -gg))
            _acc(adjoints, negs, gg * soft)

    tape.record(bwd)
    return out


def reshape(tape: Tape, x: Var, shape: tuple) -> Var:
    out = Var(x.value.reshape(shape))

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, g.reshape(x.value.shape))

    tape.record(bwd)
    return out


def normalize_rows(tape: Tape, x: Var, floor: float = 1e-12) -> Var:
    """Scale each row to unit L2 norm; rows shorter than ``floor`` stay put in scale."""
    norms = np.sqrt((x.value * x.value).sum(axis=1, keepdims=True))
    norms = np.maximum(norms, floor)
    out_val = x.value / norms
    out = Var(out_val)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        inner = (g * out_val).sum(axis=1, keepdims=True)
        _acc(adjoints, x, (g - out_val * inner) / norms)

    tape.record(bwd)
    return out


def sum_weighted(tape: Tape, x: Var, weights: np.ndarray) -> Var:
    """Scalar sum of x weighted elementwise by a fixed array (test scaffolding)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.value.shape:
        raise ValueError("weights must match the operand shape")
    out = Var((x.value * w).sum())

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        _acc(adjoints, x, float(g) * w)

    tape.record(bwd)
    return out


def combine_scalars(tape: Tape, terms: list[tuple[Var, float]]) -> Var:
    """Left-to-right weighted sum of scalar Vars: c0*v0 + c1*v1 + ...

    Association order matches plain Python float arithmetic so logged component
    values recombine bitwise to the total.
    """
    if not terms:
        raise ValueError("combine_scalars requires at least one term")
    acc = None
    for var, coef in terms:
        if var.value.shape != ():
            raise ValueError("combine_scalars operates on scalar Vars")
        piece = float(coef) * var.value
        acc = piece if acc is None else acc + piece
    out = Var(acc)

    def bwd(adjoints):
        g = adjoints.get(out)
        if g is None:
            return
        for var, coef in terms:
            _acc(adjoints, var, np.asarray(float(coef) * float(g)))

    tape.record(bwd)
    return out


def grad_check(loss_fn, params: list[Parameter], tolerance: float = 1e-4,
               step: float = 1e-5) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must recompute the scalar loss from the current parameter
    values and populate each parameter's ``.grad`` (zeroing is handled here).
    Returns the max relative error per parameter; relative error uses a 1e-6
    floor so coordinates whose gradient is essentially zero are compared
    absolutely.
    """
    for p in params:
        p.zero_grad()
    base = float(loss_fn())
    if not np.isfinite(base):
        raise NumericError(f"grad_check loss is not finite: {base}")
    analytic = {p.name: None if p.grad is None else p.grad.copy() for p in params}

    errors: dict[str, float] = {}
    for p in params:
        a = analytic[p.name]
        if a is None:
            a = np.zeros_like(p.value)
        worst = 0.0
        flat = p.value.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            up = orig + step
            down = orig - step
            flat[i] = up
            lp = float(loss_fn())
            flat[i] = down
            lm = float(loss_fn())
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError("grad_check perturbation produced a non-finite loss")
            # Divide by the spread actually applied, not 2*step, so rounding in
            # the perturbed values does not masquerade as gradient error.
            fd = (lp - lm) / (up - down)
            denom = max(abs(a_flat[i]), abs(fd), 1e-6)
            worst = max(worst, abs(a_flat[i] - fd) / denom)
        errors[p.name] = worst

    # Leave the analytic gradients in place, not the perturbation leftovers.
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.value)
        p.grad[...] = analytic[p.name] if analytic[p.name] is not None else 0.0
    return errors
