"""JIT-compiled arc kernels; every kernel has a bitwise-identical numpy fallback.

Accumulation order is always flat arc order, matching ``np.add.at``, so
results do not depend on whether the compiled or the fallback path ran.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a normal install dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def _arc_relu_gather(source_rows, src, offset, use_offset):
    num_arcs = src.shape[0]
    width = source_rows.shape[1]
    out = np.empty((num_arcs, width))
    for a in range(num_arcs):
        s = src[a]
        for j in range(width):
            v = source_rows[s, j]
            if use_offset:
                v = v + offset[j]
            out[a, j] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def _arc_relu_gather_bwd(grad, out, src, num_nodes):
    num_arcs, width = grad.shape
    d_source = np.zeros((num_nodes, width))
    d_offset = np.zeros(width)
    for a in range(num_arcs):
        s = src[a]
        for j in range(width):
            if out[a, j] > 0.0:
                g = grad[a, j]
                d_source[s, j] += g
                d_offset[j] += g
    return d_source, d_offset


@njit(cache=True)
def _index_add_rows(values, index, num_nodes):
    num_rows, width = values.shape
    out = np.zeros((num_nodes, width))
    for a in range(num_rows):
        d = index[a]
        for j in range(width):
            out[d, j] += values[a, j]
    return out


@njit(cache=True)
def _relation_aggregate(source_rows, src, dst, offset, use_offset, num_nodes, want_mask):
    num_arcs = src.shape[0]
    width = source_rows.shape[1]
    out = np.zeros((num_nodes, width))
    mask = np.empty((num_arcs if want_mask else 0, width), dtype=np.uint8)
    for a in range(num_arcs):
        s = src[a]
        d = dst[a]
        for j in range(width):
            v = source_rows[s, j]
            if use_offset:
                v = v + offset[j]
            live = v > 0.0
            if want_mask:
                mask[a, j] = 1 if live else 0
            if live:
                out[d, j] += v
    return out, mask


@njit(cache=True)
def _relation_aggregate_bwd(grad_out, mask, src, dst, num_nodes):
    num_arcs, width = mask.shape
    d_source = np.zeros((num_nodes, width))
    d_offset = np.zeros(width)
    for a in range(num_arcs):
        s = src[a]
        d = dst[a]
        for j in range(width):
            if mask[a, j]:
                g = grad_out[d, j]
                d_source[s, j] += g
                d_offset[j] += g
    return d_source, d_offset


def relation_aggregate_fwd(source_rows: np.ndarray, src: np.ndarray, dst: np.ndarray,
                           offset: np.ndarray | None, num_nodes: int, want_mask: bool):
    """out[v] = sum over arcs (u -> v) of relu(source_rows[u] + offset).

    Returns (out, mask); the arc-level relu mask is only materialized when
    ``want_mask`` (training mode), as the backward pass needs it.
    """
    if HAVE_NUMBA:
        use = offset is not None
        off = offset if use else np.empty(source_rows.shape[1])
        return _relation_aggregate(source_rows, src, dst, off, use, num_nodes, want_mask)
    vals = source_rows[src]
    if offset is not None:
        vals += offset
    np.maximum(vals, 0.0, out=vals)
    mask = (vals > 0.0).astype(np.uint8) if want_mask else np.empty((0, vals.shape[1]), np.uint8)
    return index_add_rows(vals, dst, num_nodes), mask


def relation_aggregate_bwd(grad_out: np.ndarray, mask: np.ndarray, src: np.ndarray,
                           dst: np.ndarray, num_nodes: int):
    """Returns (d_source_rows, d_offset) for relation_aggregate_fwd."""
    grad_out = np.ascontiguousarray(grad_out)
    if HAVE_NUMBA:
        return _relation_aggregate_bwd(grad_out, mask, src, dst, num_nodes)
    masked = grad_out[dst] * mask
    d_source = np.zeros((num_nodes, grad_out.shape[1]))
    np.add.at(d_source, src, masked)
    return d_source, masked.sum(axis=0)


def arc_relu_gather(source_rows: np.ndarray, src: np.ndarray,
                    offset: np.ndarray | None) -> np.ndarray:
    """out[a] = relu(source_rows[src[a]] + offset)."""
    if HAVE_NUMBA:
        use = offset is not None
        off = offset if use else np.empty(source_rows.shape[1])
        return _arc_relu_gather(source_rows, src, off, use)
    vals = source_rows[src]
    if offset is not None:
        vals += offset
    return np.maximum(vals, 0.0, out=vals)


def arc_relu_gather_bwd(grad: np.ndarray, out: np.ndarray, src: np.ndarray,
                        num_nodes: int):
    """Returns (d_source_rows, d_offset) for arc_relu_gather."""
    if HAVE_NUMBA:
        return _arc_relu_gather_bwd(grad, out, src, num_nodes)
    masked = grad * (out > 0.0)
    d_source = np.zeros((num_nodes, grad.shape[1]))
    np.add.at(d_source, src, masked)
    return d_source, masked.sum(axis=0)


def index_add_rows(values: np.ndarray, index: np.ndarray, num_nodes: int) -> np.ndarray:
    """Accumulate rows into ``out[index[a]] += values[a]`` in flat row order."""
    if HAVE_NUMBA:
        return _index_add_rows(values, index, num_nodes)
    out = np.zeros((num_nodes, values.shape[1]))
    np.add.at(out, index, values)
    return out
