"""Context-refactoring contrast for anomaly detection on multi-relation graphs.

Self-contained: a differentiable numerical kernel with hand-derived adjoints,
a relation-aware message-passing model, feature-shuffle augmentation, joint
supervised and contrastive training, a planted-anomaly benchmark generator,
and oracle-checkable metrics, all behind one CLI.
"""

__version__ = "0.1.0"

from .augment import RefactoredView, mix_features, refactor_epoch, shuffle_features
from .autodiff import Parameter, Tape, Var, grad_check
from .errors import ConfigError, CrocError, DataError, NumericError
from .graph import (CoverageReport, LabelSet, MultiRelationGraph, load_graph,
                    node_coverage, save_graph, split_nodes)
from .losses import LossBreakdown, ce_loss, infonce_loss, total_loss
from .metrics import auc, average_precision, macro_f1
from .model import CrocModel
from .optim import Adam
from .synth import MotifAudit, SynthConfig, generate, motif_audit
from .train import (AblationRow, EpochRecord, RunResult, TrainConfig, evaluate,
                    run_ablation_grid, run_multi_seed, train)

__all__ = [
    "Adam", "AblationRow", "ConfigError", "CoverageReport", "CrocError",
    "CrocModel", "DataError", "EpochRecord", "LabelSet", "LossBreakdown",
    "MotifAudit", "MultiRelationGraph", "NumericError", "Parameter",
    "RefactoredView", "RunResult", "SynthConfig", "Tape", "TrainConfig", "Var",
    "auc", "average_precision", "ce_loss", "evaluate", "generate",
    "grad_check", "infonce_loss", "load_graph", "macro_f1", "mix_features",
    "motif_audit", "node_coverage", "refactor_epoch", "run_ablation_grid",
    "run_multi_seed", "save_graph", "shuffle_features", "split_nodes",
    "total_loss", "train",
]
