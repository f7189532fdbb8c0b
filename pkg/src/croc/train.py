"""Training loop, evaluation, ablation grid, and multi-seed experiment running.

One run: per epoch, draw a fresh refactored view, forward both views through
the shared model, combine the enabled loss components, backprop, Adam step,
then score validation AUC on the original graph. The parameters achieving the
best validation AUC are restored at the end and test metrics are reported from
that checkpoint, never from the final epoch.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from itertools import product

import numpy as np

from .augment import refactor_epoch
from .autodiff import Tape, grad_check
from .errors import ConfigError, NumericError
from .graph import LabelSet, MultiRelationGraph, split_nodes
from .losses import (ce_loss, infonce_from_indices, infonce_loss,
                     sample_negative_indices, total_loss)
from .metrics import auc, average_precision, macro_f1
from .model import CrocModel
from .optim import Adam
from .synth import SynthConfig, generate


@dataclass
class TrainConfig:
    """Hyperparameters and ablation switches for one training run."""

    alpha: float = 0.5
    gamma: float = 0.5
    eta: float = 0.1
    tau: float = 2.0
    negatives_k: int = 5
    learning_rate: float = 0.003
    max_epochs: int = 500
    patience: int = 50
    hidden_dim: int = 64
    num_layers: int = 2
    backbone: str = "gin"
    use_rja: bool = True
    use_contrast: bool = True
    use_refactor_ce: bool = True
    seed: int = 0
    label_rate: float = 0.01
    stratified_split: bool = False
    include_positive_in_denominator: bool = False
    normalize_contrast: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.gamma < 0.0 or self.eta < 0.0:
            raise ConfigError("gamma and eta must be non-negative")
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.negatives_k < 1:
            raise ConfigError("negatives_k must be at least 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ConfigError("patience must lie in [1, max_epochs]")
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ConfigError("hidden_dim and num_layers must be at least 1")
        if self.backbone not in ("gin", "sage"):
            raise ConfigError(f"backbone must be 'gin' or 'sage', got {self.backbone!r}")
        if not 0.0 < self.label_rate < 1.0:
            raise ConfigError(f"label_rate must lie in (0, 1), got {self.label_rate}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    ce_original: float
    ce_refactored: float
    contrast: float
    total: float
    val_auc: float
    step_seconds: float


@dataclass
class RunResult:
    best_val_auc: float
    best_epoch: int
    test_auc: float
    test_ap: float
    test_macro_f1: float
    history: list[EpochRecord] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "best_val_auc": self.best_val_auc,
            "best_epoch": self.best_epoch,
            "test_auc": self.test_auc,
            "test_ap": self.test_ap,
            "test_macro_f1": self.test_macro_f1,
            "wall_time": self.wall_time,
            "epochs_run": len(self.history),
        }


def evaluate(model: CrocModel, graph: MultiRelationGraph, labels: np.ndarray,
             mask: np.ndarray):
    """AUC, AP and Macro-F1 of the model's anomaly scores over masked nodes.

    Always scores on the original graph features. Raises if the mask holds a
    single class (AUC undefined).
    """
    scores = model.anomaly_scores(graph)
    mask = np.asarray(mask, dtype=bool)
    s, y = scores[mask], np.asarray(labels)[mask]
    return auc(s, y), average_precision(s, y), macro_f1(s, y)


def train(graph: MultiRelationGraph, label_set: LabelSet, config: TrainConfig):
    """Run one training job; returns (model, RunResult).

    Deterministic given (graph, label_set, config): model init, per-epoch
    permutations and negative sampling run on independent child streams of the
    config seed. Aborts with NumericError diagnostics if the loss goes
    non-finite.
    """
    config.validate()
    t_start = time.perf_counter()
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    model = CrocModel(
        num_relations=graph.num_relations,
        in_dim=graph.feature_dim,
        hidden_dim=config.hidden_dim,
        num_layers=config.num_layers,
        backbone=config.backbone,
        relation_aware=config.use_rja,
        seed=seeds[0],
    )
    shuffle_rng = np.random.default_rng(seeds[1])
    negative_rng = np.random.default_rng(seeds[2])
    optimizer = Adam(model.params(), learning_rate=config.learning_rate)

    labels = label_set.labels
    train_mask = label_set.train_mask
    anchors = np.flatnonzero(label_set.unlabeled_mask)
    crf_on = config.use_refactor_ce and config.gamma > 0.0
    ctr_on = config.use_contrast and config.eta > 0.0
    need_view = crf_on or ctr_on

    history: list[EpochRecord] = []
    best_val = -np.inf
    best_epoch = -1
    best_snapshot = None
    bad_epochs = 0

    for epoch in range(config.max_epochs):
        t_step = time.perf_counter()
        tape = Tape()
        h = model.embed(tape, graph)
        probs = model.classify(tape, h)
        ce_ori = ce_loss(tape, probs, labels, train_mask)
        ce_crf = None
        ctr = None
        if need_view:
            view = refactor_epoch(graph, config.alpha, shuffle_rng, epoch=epoch)
            h_prime = model.embed(tape, graph, view.mixed_features)
            if crf_on:
                probs_prime = model.classify(tape, h_prime)
                ce_crf = ce_loss(tape, probs_prime, labels, train_mask)
            if ctr_on:
                ctr = infonce_loss(
                    tape, h, h_prime, anchors, config.negatives_k, config.tau,
                    negative_rng,
                    include_positive_in_denominator=config.include_positive_in_denominator,
                    normalize=config.normalize_contrast,
                )
        total_var, breakdown = total_loss(
            tape, ce_ori, ce_crf, ctr, config.gamma, config.eta,
            config.tau, config.negatives_k,
        )
        if not np.isfinite(breakdown.total):
            raise NumericError(
                f"non-finite loss at epoch {epoch}: ce_original={breakdown.ce_original}, "
                f"ce_refactored={breakdown.ce_refactored}, contrast={breakdown.contrast}"
            )
        optimizer.zero_grad()
        tape.backward(total_var)
        optimizer.step()
        step_seconds = time.perf_counter() - t_step

        val_scores = model.anomaly_scores(graph)
        val_auc = auc(val_scores[label_set.val_mask], labels[label_set.val_mask])
        history.append(EpochRecord(
            epoch=epoch,
            ce_original=breakdown.ce_original,
            ce_refactored=breakdown.ce_refactored,
            contrast=breakdown.contrast,
            total=breakdown.total,
            val_auc=val_auc,
            step_seconds=step_seconds,
        ))
        if val_auc > best_val:
            best_val = val_auc
            best_epoch = epoch
            best_snapshot = model.snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    model.restore(best_snapshot)
    test_auc, test_ap, test_f1 = evaluate(model, graph, labels, label_set.test_mask)
    result = RunResult(
        best_val_auc=best_val,
        best_epoch=best_epoch,
        test_auc=test_auc,
        test_ap=test_ap,
        test_macro_f1=test_f1,
        history=history,
        wall_time=time.perf_counter() - t_start,
    )
    return model, result


HISTORY_COLUMNS = ("epoch", "ce_ori", "ce_crf", "ctr", "total", "val_auc")


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for rec in history:
            writer.writerow([rec.epoch, f"{rec.ce_original:.17g}", f"{rec.ce_refactored:.17g}",
                             f"{rec.contrast:.17g}", f"{rec.total:.17g}", f"{rec.val_auc:.17g}"])


def _seeded_run(args):
    graph, labels, config, seed = args
    cfg = replace(config, seed=seed)
    label_set = split_nodes(labels, cfg.label_rate, seed, stratified=cfg.stratified_split)
    _, result = train(graph, label_set, cfg)
    return result


def run_multi_seed(graph: MultiRelationGraph, labels: np.ndarray, config: TrainConfig,
                   seeds=None, n_jobs: int = 1) -> list[RunResult]:
    """Train once per seed (fresh split and init each time); 10 seeds by default."""
    if seeds is None:
        seeds = list(range(10))
    jobs = [(graph, labels, config, int(s)) for s in seeds]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_seeded_run, jobs))
    return [_seeded_run(j) for j in jobs]


@dataclass
class AblationRow:
    use_rja: bool
    use_contrast: bool
    use_refactor_ce: bool
    mean_auc: float
    std_auc: float
    mean_ap: float
    aucs: list[float]


def run_ablation_grid(graph: MultiRelationGraph, labels: np.ndarray,
                      base_config: TrainConfig, seeds=None,
                      n_jobs: int = 1) -> list[AblationRow]:
    """All 8 on/off combinations of the relation-aware aggregation, the
    contrast term and the refactored-view CE term, each averaged over seeds."""
    if seeds is None:
        seeds = list(range(10))
    if len(seeds) < 2:
        raise ConfigError("ablation grid needs at least 2 seeds for mean/std reporting")
    rows = []
    for rja, ctr, crf in product((False, True), repeat=3):
        cfg = replace(base_config, use_rja=rja, use_contrast=ctr, use_refactor_ce=crf)
        results = run_multi_seed(graph, labels, cfg, seeds=seeds, n_jobs=n_jobs)
        aucs = [r.test_auc for r in results]
        rows.append(AblationRow(
            use_rja=rja, use_contrast=ctr, use_refactor_ce=crf,
            mean_auc=float(np.mean(aucs)), std_auc=float(np.std(aucs)),
            mean_ap=float(np.mean([r.test_ap for r in results])),
            aucs=[float(a) for a in aucs],
        ))
    return rows


def build_toy_problem(hidden_dim: int = 8, seed: int = 7):
    """A 12-node, 2-relation training problem with every loss component active.

    Negatives and the refactored view are frozen so the loss is a pure function
    of the parameters; used by the gradient checker. Returns
    (model, params, loss_fn).
    """
    synth = SynthConfig(num_nodes=12, num_relations=2, anomaly_ratio=0.25,
                        feature_dim=5, camouflage_rate=0.5, mean_degree=3.0,
                        anomaly_motif_strength=0.5, class_separation=2.0, seed=seed)
    graph, labels = generate(synth)
    label_set = split_nodes(labels, 0.2, seed, stratified=True)
    model = CrocModel(num_relations=2, in_dim=graph.feature_dim,
                      hidden_dim=hidden_dim, num_layers=2, backbone="gin",
                      relation_aware=True, seed=seed)
    rng = np.random.default_rng(seed + 1)
    view = refactor_epoch(graph, alpha=0.6, rng=rng)
    anchors = np.flatnonzero(label_set.unlabeled_mask)
    neg_idx = sample_negative_indices(rng, graph.num_nodes, anchors, k=3)
    labels_arr = label_set.labels
    train_mask = label_set.train_mask

    def loss_fn():
        for p in model.params():
            p.zero_grad()
        tape = Tape()
        h = model.embed(tape, graph)
        probs = model.classify(tape, h)
        ce_ori = ce_loss(tape, probs, labels_arr, train_mask)
        h_prime = model.embed(tape, graph, view.mixed_features)
        probs_prime = model.classify(tape, h_prime)
        ce_crf = ce_loss(tape, probs_prime, labels_arr, train_mask)
        ctr = infonce_from_indices(tape, h, h_prime, anchors, neg_idx, tau=2.0)
        total_var, _ = total_loss(tape, ce_ori, ce_crf, ctr, gamma=0.7, eta=0.4,
                                  tau=2.0, negatives_per_anchor=3)
        tape.backward(total_var)
        return float(total_var.value)

    return model, model.params(), loss_fn


def toy_gradient_check(tolerance: float = 1e-4, step: float = 1e-5):
    """Full-loss gradient check on the bundled toy problem.

    Returns (worst_error, per_parameter_errors).
    """
    _, params, loss_fn = build_toy_problem()
    errors = grad_check(loss_fn, params, tolerance=tolerance, step=step)
    return max(errors.values()), errors
