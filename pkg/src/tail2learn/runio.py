"""Run-directory artifacts: CSV logs, metric tables, ledger, predictions.

Floats are written with repr-level precision so identical runs produce
byte-identical files; wall-clock columns are the only nondeterministic
content and sit in a dedicated final column.
"""

from __future__ import annotations

import os

import numpy as np

from . import checkpoint
from .evaluation import (BoundLedger, Metrics, bound_ledger, confusion,
                         metrics, per_class_recall, predictions)
from .graph import LabeledGraph, label_counts
from .model import forward
from .training import EpochLog, TrainResult

METRIC_NAMES = ("acc", "bacc", "macro_f1", "gmeans")


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_log_csv(path: str, logs: list[EpochLog], num_classes: int,
                  depth: int) -> None:
    header = ["epoch", "l_nc", "l_bcl", "l_scl", "l_total", "range_ce"]
    header += [f"l_bcl_layer_{i}" for i in range(depth)]
    header += [f"ce_class_{c}" for c in range(num_classes)]
    for split in ("train", "val", "test"):
        header += [f"{split}_{m}" for m in METRIC_NAMES]
    header.append("wall_ms")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for log in logs:
            r = log.report
            row = [str(log.epoch), fmt(r.l_nc), fmt(r.l_bcl), fmt(r.l_scl),
                   fmt(r.l_total), fmt(r.range_ce)]
            row += [fmt(v) for v in r.l_bcl_layers]
            row += [""] * (depth - len(r.l_bcl_layers))
            row += [fmt(v) for v in r.per_class_ce]
            for split in ("train", "val", "test"):
                m = log.split_metrics[split]
                row += [fmt(m.acc), fmt(m.bacc), fmt(m.macro_f1),
                        fmt(m.gmeans)]
            row.append(fmt(log.wall_ms))
            fh.write(",".join(row) + "\n")


def write_metrics_csv(path: str, split_metrics: dict[str, Metrics]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("split," + ",".join(METRIC_NAMES) + "\n")
        for split, m in split_metrics.items():
            fh.write(f"{split},{fmt(m.acc)},{fmt(m.bacc)},"
                     f"{fmt(m.macro_f1)},{fmt(m.gmeans)}\n")


def write_per_class_csv(path: str, g: LabeledGraph,
                        test_recalls: np.ndarray) -> None:
    train_counts = label_counts(g, g.train_mask)
    test_counts = label_counts(g, g.test_mask)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class,train_count,test_count,recall\n")
        for c in range(g.num_classes):
            rec = "" if np.isnan(test_recalls[c]) else fmt(test_recalls[c])
            fh.write(f"{c},{train_counts[c]},{test_counts[c]},{rec}\n")


def write_bound_ledger_csv(path: str, ledger: BoundLedger) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer,num_tasks,task_sizes,reciprocal_size_sum,"
                 "range_ce,train_loss,val_loss,gap\n")
        scalars = (fmt(ledger.range_ce), fmt(ledger.train_loss),
                   fmt(ledger.val_loss), fmt(ledger.gap))
        if not ledger.task_sizes:
            fh.write(",".join(("", "0", "", "")) + "," +
                     ",".join(scalars) + "\n")
            return
        for layer, sizes in enumerate(ledger.task_sizes, start=1):
            fh.write(",".join((
                str(layer), str(len(sizes)),
                ";".join(str(s) for s in sizes),
                fmt(ledger.reciprocal_sums[layer - 1]))) + "," +
                ",".join(scalars) + "\n")


def write_predictions(path: str, preds: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node, label in enumerate(preds):
            fh.write(f"{node}\t{label}\n")


def evaluate_model(model, g: LabeledGraph) -> dict:
    """Best-model evaluation artifacts: metrics per split, recalls, preds."""
    trace = forward(model, g, "eval")
    preds = predictions(trace.logits.data)
    split_metrics = {}
    for split, mask in (("train", g.train_mask), ("val", g.val_mask),
                        ("test", g.test_mask)):
        if mask is not None and mask.any():
            split_metrics[split] = metrics(
                confusion(g.labels, preds, g.num_classes, mask))
    test_cm = confusion(g.labels, preds, g.num_classes, g.test_mask)
    recalls, _ = per_class_recall(test_cm)
    return {"trace": trace, "preds": preds, "split_metrics": split_metrics,
            "test_recalls": recalls}


def write_run_artifacts(run_dir: str, g: LabeledGraph,
                        result: TrainResult) -> list[str]:
    """Write every training artifact; returns the file list.

    The ledger's per-class losses come from the selected (best-validation)
    epoch's training step; its train/val losses are recomputed from the
    returned model.
    """
    os.makedirs(run_dir, exist_ok=True)
    depth = result.model.config.depth
    paths = []

    def p(name):
        paths.append(os.path.join(run_dir, name))
        return paths[-1]

    write_log_csv(p("log.csv"), result.logs, g.num_classes, depth)
    ev = evaluate_model(result.model, g)
    write_metrics_csv(p("metrics.csv"), ev["split_metrics"])
    write_per_class_csv(p("per_class.csv"), g, ev["test_recalls"])
    if result.logs:
        report = result.logs[max(0, result.best_epoch - 1)].report
        ledger = bound_ledger(ev["trace"], report, g)
        write_bound_ledger_csv(p("bound_ledger.csv"), ledger)
    checkpoint.save_model(p("model.ckpt"), result.model)
    write_predictions(p("predictions.tsv"), ev["preds"])
    return paths
