"""Command-line entry point: gen, train, eval, ablate, coverage, gradcheck.

Every failure exits with a structured error on stderr and a class-specific
code: 2 for configuration problems, 3 for data problems, 4 for numeric
failures. Run outputs land in ``--out`` together with a manifest holding the
fully resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .config import ResolvedConfig, parse_config, resolve_data_paths
from .errors import ConfigError, CrocError, DataError, NumericError
from .graph import (LabelSet, load_graph, load_labels, node_coverage,
                    save_graph, save_labels, split_nodes)
from .model import CrocModel
from .synth import generate, motif_audit
from .train import (evaluate, run_ablation_grid, toy_gradient_check, train,
                    write_history_csv)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_manifest(out_dir: Path, command: str, resolved: ResolvedConfig,
                    extra: dict | None = None) -> None:
    payload = {
        "package_version": __version__,
        "command": command,
        "config": resolved.to_dict(),
    }
    if extra:
        payload.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(human)


def _dataset_files(data_dir: Path) -> dict:
    manifest = data_dir / "manifest.json"
    if manifest.exists():
        with open(manifest) as fh:
            files = json.load(fh).get("files", {})
        return {
            "edges": [str(data_dir / p) for p in files["edges"]],
            "features": str(data_dir / files["features"]),
            "labels": str(data_dir / files["labels"]),
        }
    edges = sorted(str(p) for p in data_dir.glob("relation_*.csv"))
    if not edges:
        raise DataError(f"{data_dir}: no relation_*.csv files and no manifest.json")
    features = data_dir / "features.bin"
    if not features.exists():
        features = data_dir / "features.csv"
    labels = data_dir / "labels.csv"
    return {"edges": edges, "features": str(features), "labels": str(labels)}


def _load_dataset(args, resolved: ResolvedConfig):
    if getattr(args, "data", None):
        files = _dataset_files(Path(args.data))
    elif resolved.data:
        base = Path(args.config).parent if args.config else Path.cwd()
        files = resolve_data_paths(resolved.data, base)
    else:
        raise ConfigError("no dataset: pass --data DIR or a data section in the config")
    if "labels" not in files or not Path(files["labels"]).exists():
        raise DataError("dataset has no labels.csv; training and evaluation need labels")
    graph = load_graph(files["edges"], files["features"])
    labels = load_labels(files["labels"], graph.num_nodes)
    return graph, labels


def _write_split(path, label_set: LabelSet) -> None:
    roles = np.full(label_set.num_nodes, "test", dtype=object)
    roles[label_set.val_mask] = "val"
    roles[label_set.train_mask] = "train"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "role"])
        for i, role in enumerate(roles):
            writer.writerow([i, role])


def _read_split(path, labels: np.ndarray) -> LabelSet:
    n = len(labels)
    masks = {"train": np.zeros(n, bool), "val": np.zeros(n, bool), "test": np.zeros(n, bool)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for row in reader:
            if not row:
                continue
            node, role = int(row[0]), row[1]
            if role not in masks:
                raise DataError(f"{path}: unknown split role {role!r}")
            masks[role][node] = True
    return LabelSet(labels=labels, train_mask=masks["train"],
                    val_mask=masks["val"], test_mask=masks["test"])


def cmd_gen(args, resolved: ResolvedConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph, labels = generate(resolved.synth)
    edge_names = [f"relation_{r}.csv" for r in range(graph.num_relations)]
    feature_name = "features.csv" if args.csv_features else "features.bin"
    save_graph(graph, [out_dir / e for e in edge_names], out_dir / feature_name,
               binary_features=not args.csv_features)
    save_labels(out_dir / "labels.csv", labels)
    files = {"edges": edge_names, "features": feature_name, "labels": "labels.csv"}
    _write_manifest(out_dir, "gen", resolved, {"files": files})
    audit = motif_audit(graph, labels)
    payload = {
        "out_dir": str(out_dir),
        "num_nodes": graph.num_nodes,
        "num_relations": graph.num_relations,
        "num_anomalies": int(labels.sum()),
        "arcs": graph.num_arcs,
        "motif_rate_anomaly": audit.anomaly_rate,
        "motif_rate_normal": audit.normal_rate,
    }
    _emit(args, payload,
          f"wrote {graph.num_nodes} nodes / {graph.num_arcs} arcs / "
          f"{int(labels.sum())} anomalies to {out_dir}")
    return 0


def cmd_train(args, resolved: ResolvedConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph, labels = _load_dataset(args, resolved)
    cfg = resolved.train
    label_set = split_nodes(labels, cfg.label_rate, cfg.seed,
                            stratified=cfg.stratified_split)
    model, result = train(graph, label_set, cfg)
    _write_split(out_dir / "split.csv", label_set)
    write_history_csv(out_dir / "history.csv", result.history)
    save_checkpoint(out_dir / "model.ckpt", model.params())
    record = {
        "config": resolved.to_dict(),
        "data_dir": str(args.data) if args.data else None,
        "graph": {"num_nodes": graph.num_nodes, "num_relations": graph.num_relations,
                  "feature_dim": graph.feature_dim},
        "result": result.to_dict(),
    }
    with open(out_dir / "result.json", "w") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    _write_manifest(out_dir, "train", resolved, {"data_dir": record["data_dir"]})
    payload = {"out_dir": str(out_dir), **result.to_dict()}
    _emit(args, payload,
          f"test AUC {result.test_auc:.4f}  AP {result.test_ap:.4f}  "
          f"Macro-F1 {result.test_macro_f1:.4f}  "
          f"(best val AUC {result.best_val_auc:.4f} at epoch {result.best_epoch}, "
          f"{len(result.history)} epochs, {result.wall_time:.1f}s)")
    return 0


def cmd_eval(args, resolved: ResolvedConfig) -> int:
    run_dir = Path(args.run)
    try:
        with open(run_dir / "result.json") as fh:
            record = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{run_dir}: no result.json (is this a train output dir?)") from None
    cfg_doc = record["config"]["train"]
    data_dir = args.data or record.get("data_dir")
    if not data_dir:
        raise ConfigError("eval needs --data when the run record has no data_dir")
    files = _dataset_files(Path(data_dir))
    graph = load_graph(files["edges"], files["features"])
    labels = load_labels(files["labels"], graph.num_nodes)
    label_set = _read_split(run_dir / "split.csv", labels)
    model = CrocModel(
        num_relations=graph.num_relations,
        in_dim=graph.feature_dim,
        hidden_dim=cfg_doc["hidden_dim"],
        num_layers=cfg_doc["num_layers"],
        backbone=cfg_doc["backbone"],
        relation_aware=cfg_doc["use_rja"],
    )
    restore_into(model.params(), load_checkpoint(run_dir / "model.ckpt"))
    test_auc, test_ap, test_f1 = evaluate(model, graph, labels, label_set.test_mask)
    payload = {"test_auc": test_auc, "test_ap": test_ap, "test_macro_f1": test_f1}
    _emit(args, payload,
          f"test AUC {test_auc:.4f}  AP {test_ap:.4f}  Macro-F1 {test_f1:.4f}")
    return 0


def cmd_ablate(args, resolved: ResolvedConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph, labels = _load_dataset(args, resolved)
    seeds = list(range(args.seeds))
    rows = run_ablation_grid(graph, labels, resolved.train, seeds=seeds,
                             n_jobs=args.jobs)
    rows_doc = [
        {"rja": r.use_rja, "contrast": r.use_contrast, "refactor_ce": r.use_refactor_ce,
         "mean_auc": r.mean_auc, "std_auc": r.std_auc, "mean_ap": r.mean_ap,
         "aucs": r.aucs}
        for r in rows
    ]
    with open(out_dir / "ablation.json", "w") as fh:
        json.dump({"seeds": seeds, "rows": rows_doc}, fh, indent=2)
        fh.write("\n")
    _write_manifest(out_dir, "ablate", resolved, {"seeds": seeds})
    if args.json:
        print(json.dumps({"rows": rows_doc}, indent=2))
    else:
        print("rja contrast refactor_ce   AUC")
        for r in rows:
            mark = lambda b: " on" if b else "off"
            print(f"{mark(r.use_rja)}     {mark(r.use_contrast)}         {mark(r.use_refactor_ce)}"
                  f"   {100 * r.mean_auc:.2f} +- {100 * r.std_auc:.2f}")
    return 0


def cmd_coverage(args, resolved: ResolvedConfig) -> int:
    graph, labels = _load_dataset(args, resolved)
    cfg = resolved.train
    label_set = split_nodes(labels, cfg.label_rate, cfg.seed,
                            stratified=cfg.stratified_split)
    report = node_coverage(graph, label_set.train_mask, args.hops)
    payload = {"hops": report.hops, "covered": report.covered_count,
               "fraction": report.fraction,
               "labeled": int(label_set.train_mask.sum())}
    _emit(args, payload,
          f"{report.covered_count}/{graph.num_nodes} nodes "
          f"({100 * report.fraction:.2f}%) within {args.hops} hops of the "
          f"{int(label_set.train_mask.sum())} labeled nodes")
    return 0


def cmd_gradcheck(args, resolved: ResolvedConfig) -> int:
    worst, errors = toy_gradient_check(tolerance=args.tolerance)
    payload = {"max_relative_error": worst, "tolerance": args.tolerance,
               "per_parameter": errors}
    _emit(args, payload,
          f"max relative gradient error {worst:.3e} over {len(errors)} parameters "
          f"(tolerance {args.tolerance:.0e})")
    if worst >= args.tolerance:
        print(json.dumps({"error": "NumericError",
                          "message": f"gradient check failed: {worst:.3e}"}),
              file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="croc",
        description="Context-refactoring contrast for multi-relation graph anomaly detection",
    )
    parser.add_argument("--json", action="store_true", help="machine-parseable stdout")
    parser.add_argument("--seed", type=int, default=None,
                        help="override both the training and generator seeds")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--csv-features", action="store_true",
                   help="write features as CSV instead of the binary container")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None, help="dataset directory (from gen)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a finished training run")
    p.add_argument("--run", required=True, help="training output directory")
    p.add_argument("--data", default=None, help="dataset directory override")
    p.set_defaults(func=cmd_eval, config=None)

    p = sub.add_parser("ablate", help="run the 8-row component on/off grid")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("coverage", help="labeled-node hop coverage of a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--hops", type=int, required=True)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck, config=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolved = parse_config(args.config, overrides=args.overrides, seed=args.seed)
        return args.func(args, resolved)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(json.dumps({"error": "DataError", "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(json.dumps({"error": "NumericError", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC
    except CrocError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
