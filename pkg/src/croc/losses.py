"""Training objectives: per-view supervised CE, node-wise contrast, and their sum.

The combined objective is ce_original + gamma * ce_refactored + eta * contrast.
Both CE terms are supervised only by ground-truth labels on the training mask;
contrast anchors are exclusively the unlabeled nodes, paired across views, with
negatives drawn from the original-view embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var


@dataclass
class LossBreakdown:
    """Per-component values of one training step, for logging and invariants."""

    ce_original: float
    ce_refactored: float
    contrast: float
    total: float
    weights: tuple[float, float]
    temperature: float
    negatives_per_anchor: int


def ce_loss(tape: Tape, predictions: Var, labels: np.ndarray, mask: np.ndarray) -> Var:
    """Mean cross-entropy of probability rows against integer labels over a mask.

    Probabilities are clamped at 1e-12 before the log; identical clamping is
    used for both the original-view and refactored-view terms.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("ce_loss requires a non-empty mask")
    return ad.masked_nll(tape, predictions, np.asarray(labels), mask)


def sample_negative_indices(rng: np.random.Generator, num_nodes: int,
                            anchors: np.ndarray, k: int) -> np.ndarray:
    """Per-anchor negatives: k distinct nodes, none equal to the anchor.

    Uniform over all other nodes. Rows drawing an internal duplicate are
    redrawn wholesale, so the result is exact sampling without replacement and
    deterministic given the generator state.
    """
    if k < 1:
        raise ValueError("need at least one negative per anchor")
    if k > num_nodes - 1:
        raise ValueError(f"cannot draw {k} distinct negatives from {num_nodes - 1} candidates")
    anchors = np.asarray(anchors)
    m = anchors.shape[0]
    neg = rng.integers(0, num_nodes - 1, size=(m, k))
    neg += neg >= anchors[:, None]  # skip over the anchor itself
    if k > 1:
        while True:
            srt = np.sort(neg, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            if not bad.any():
                break
            redraw = rng.integers(0, num_nodes - 1, size=(int(bad.sum()), k))
            redraw += redraw >= anchors[bad][:, None]
            neg[bad] = redraw
    return neg


def infonce_from_indices(tape: Tape, h: Var, h_prime: Var, anchors: np.ndarray,
                         neg_idx: np.ndarray, tau: float,
                         include_positive_in_denominator: bool = False,
                         normalize: bool = False) -> Var:
    """Contrast with an explicit (anchors, negatives) assignment.

    Positives pair each anchor's embeddings across views; negatives index
    original-view embeddings. Similarities are raw inner products unless
    ``normalize`` switches to unit-norm rows. By default the positive term is
    absent from the denominator; the flag restores the standard normalized form.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    anchors = np.asarray(anchors)
    neg_idx = np.asarray(neg_idx)
    if neg_idx.shape[0] != anchors.shape[0]:
        raise ValueError("one negative row per anchor required")
    if normalize:
        h = ad.normalize_rows(tape, h)
        h_prime = ad.normalize_rows(tape, h_prime)
    pos, neg_sims = ad.contrast_similarities(tape, h, h_prime, anchors, neg_idx)
    return ad.contrast_reduce(tape, pos, neg_sims, tau,
                              include_positive=include_positive_in_denominator)


def infonce_loss(tape: Tape, h: Var, h_prime: Var, unlabeled: np.ndarray, k: int,
                 tau: float, rng: np.random.Generator,
                 include_positive_in_denominator: bool = False,
                 normalize: bool = False) -> Var:
    """Node-wise contrast over the unlabeled anchors with freshly drawn negatives.

    Negatives are sampled per anchor, uniformly over all other nodes (labeled
    nodes are eligible), without replacement within an anchor.
    """
    unlabeled = np.asarray(unlabeled)
    anchors = np.flatnonzero(unlabeled) if unlabeled.dtype == np.bool_ else unlabeled
    if k >= anchors.shape[0]:
        raise ValueError(
            f"need more unlabeled anchors than negatives, got {anchors.shape[0]} <= {k}")
    neg_idx = sample_negative_indices(rng, h.value.shape[0], anchors, k)
    return infonce_from_indices(tape, h, h_prime, anchors, neg_idx, tau,
                                include_positive_in_denominator=include_positive_in_denominator,
                                normalize=normalize)


def total_loss(tape: Tape, ce_original: Var, ce_refactored: Var | None,
               contrast: Var | None, gamma: float, eta: float,
               tau: float, negatives_per_anchor: int) -> tuple[Var, LossBreakdown]:
    """Weighted sum of the enabled components, with a logging breakdown.

    Disabled components enter the breakdown as 0.0 with an effective weight of
    0. The float total recombines bitwise from the breakdown fields as
    ce_original + gamma * ce_refactored + eta * contrast.
    """
    if gamma < 0.0 or eta < 0.0:
        raise ValueError("loss weights must be non-negative")
    terms: list[tuple[Var, float]] = [(ce_original, 1.0)]
    eff_gamma = 0.0
    eff_eta = 0.0
    if ce_refactored is not None:
        terms.append((ce_refactored, gamma))
        eff_gamma = gamma
    if contrast is not None:
        terms.append((contrast, eta))
        eff_eta = eta
    total = ad.combine_scalars(tape, terms)
    breakdown = LossBreakdown(
        ce_original=float(ce_original.value),
        ce_refactored=float(ce_refactored.value) if ce_refactored is not None else 0.0,
        contrast=float(contrast.value) if contrast is not None else 0.0,
        total=float(total.value),
        weights=(eff_gamma, eff_eta),
        temperature=tau,
        negatives_per_anchor=negatives_per_anchor,
    )
    return total, breakdown
