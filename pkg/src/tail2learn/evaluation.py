"""Long-tail classification metrics and the generalization-bound ledger.

Accuracy, balanced accuracy and macro F1 are computed in exact rational
arithmetic before the final float conversion, so identities such as
"balanced accuracy equals accuracy under equal per-class test counts" hold
exactly, not just to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .graph import LabeledGraph
from .losses import (LossReport, TaskAssignment, class_aligned_assignment,
                     nearest_prototype_assignment)
from .model import ForwardTrace


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer counts; rows are true classes, columns predicted classes."""

    counts: np.ndarray  # (T, T) int64

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (c < 0).any():
            raise ValueError("confusion matrix counts must be >= 0")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int,
              mask: np.ndarray | None = None) -> ConfusionMatrix:
    if mask is not None:
        y_true, y_pred = y_true[mask], y_pred[mask]
    keep = y_true >= 0
    y_true, y_pred = y_true[keep], y_pred[keep]
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class Metrics:
    acc: float
    bacc: float
    macro_f1: float
    gmeans: float

    def as_dict(self) -> dict[str, float]:
        return {"acc": self.acc, "bacc": self.bacc,
                "macro_f1": self.macro_f1, "gmeans": self.gmeans}


def per_class_recall(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """(recalls, present): recall per class, NaN where the class has no
    test rows; ``present`` flags classes with at least one test row."""
    c = cm.counts
    row = c.sum(axis=1)
    present = row > 0
    recalls = np.full(cm.num_classes, np.nan)
    recalls[present] = c.diagonal()[present] / row[present]
    return recalls, present


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, balanced accuracy, macro F1 and geometric-mean recall.

    Classes without test rows are excluded from the macro averages. A class
    with neither predictions nor true positives scores F1 = 0; any
    zero-recall class forces the geometric mean to zero.
    """
    c = cm.counts
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    row = c.sum(axis=1)
    col = c.sum(axis=0)
    present = np.flatnonzero(row > 0)

    acc = Fraction(int(c.diagonal().sum()), total)
    recalls = [Fraction(int(c[t, t]), int(row[t])) for t in present]
    bacc = sum(recalls, Fraction(0)) / len(recalls)

    f1s = []
    for t in present:
        tp = int(c[t, t])
        denom = 2 * tp + int(row[t] - tp) + int(col[t] - tp)
        f1s.append(Fraction(2 * tp, denom) if denom else Fraction(0))
    macro_f1 = sum(f1s, Fraction(0)) / len(f1s)

    if any(r == 0 for r in recalls):
        gmeans = 0.0
    else:
        gmeans = math.exp(math.fsum(math.log(r) for r in recalls)
                          / len(recalls))
    return Metrics(acc=float(acc), bacc=float(bacc),
                   macro_f1=float(macro_f1), gmeans=gmeans)


def predictions(logits: np.ndarray) -> np.ndarray:
    """Argmax per row, ties to the lower class id."""
    return np.argmax(logits, axis=1).astype(np.int64)


def mean_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                       mask: np.ndarray) -> float:
    rows = np.flatnonzero(np.asarray(mask, bool) & (labels >= 0))
    if len(rows) == 0:
        return float("nan")
    sel = logits[rows]
    m = sel.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(sel - m).sum(axis=1, keepdims=True)))[:, 0]
    return float((lse - sel[np.arange(len(rows)), labels[rows]]).mean())


# ---------------------------------------------------------------------------
# bound ledger
# ---------------------------------------------------------------------------

def reciprocal_size_sum(counts) -> float:
    """Sum of 1/n_t over nonempty tasks."""
    vals = np.asarray(counts, dtype=np.float64)
    vals = vals[vals > 0]
    if vals.size == 0:
        raise ValueError("no nonempty tasks")
    return float((1.0 / vals).sum())


def merged_reciprocal_check(counts, merge_map) -> tuple[float, float, bool]:
    """Compare sum(1/n_t) before and after merging tasks into groups.

    ``merge_map[t]`` names the group of fine task t. The merged sum can
    never exceed the fine sum; the comparison runs in exact rational
    arithmetic (a relabeling merge must come out equal, which float
    summation order would occasionally violate), so any False ``holds`` is
    an implementation bug, not a data property.
    """
    counts = np.asarray(counts, dtype=np.int64)
    merge_map = np.asarray(merge_map, dtype=np.int64)
    if counts.size == 0:
        raise ValueError("empty partition")
    if (counts <= 0).any():
        raise ValueError("task sizes must be positive")
    if merge_map.shape != counts.shape:
        raise ValueError("merge map must name a group for every task")
    merged = np.bincount(merge_map, weights=counts).astype(np.int64)
    before = sum(Fraction(1, int(c)) for c in counts)
    after = sum(Fraction(1, int(c)) for c in merged[merged > 0])
    return float(before), float(after), after <= before


@dataclass(frozen=True)
class BoundLedger:
    """Empirically computable terms of the generalization bound."""

    task_sizes: tuple[tuple[int, ...], ...]      # per pooling level
    reciprocal_sums: tuple[float, ...]           # sum 1/n_t per level
    per_class_train_loss: tuple[float, ...]
    range_ce: float
    train_loss: float
    val_loss: float
    gap: float                                   # val - train mean loss

    def __post_init__(self):
        for sizes in self.task_sizes:
            if sum(sizes) != sum(self.task_sizes[0]):
                raise ValueError("task sizes must cover all nodes at every "
                                 "level")


def level_assignments(trace: ForwardTrace, g: LabeledGraph) -> list[TaskAssignment]:
    """Task assignment per pooling level, classes pinned at the first."""
    out = []
    for layer in range(len(trace.pools)):
        z = trace.z_levels[layer].data
        protos = trace.z_levels[layer + 1].data
        if layer == 0 and protos.shape[0] == g.num_classes and \
                g.train_mask is not None:
            out.append(class_aligned_assignment(z, protos, g.labels,
                                                g.train_mask))
        else:
            out.append(nearest_prototype_assignment(z, protos))
    return out


def bound_ledger(trace: ForwardTrace, report: LossReport,
                 g: LabeledGraph) -> BoundLedger:
    """Collect task sizes, reciprocal sums, loss range and the risk gap.

    Task sizes at deeper levels count original nodes through composed
    assignments (each level-l node inherits every node mapped onto it), so
    they sum to n at every level.
    """
    assigns = level_assignments(trace, g)
    sizes: list[tuple[int, ...]] = []
    recips: list[float] = []
    composed = None
    for a in assigns:
        composed = a.task_of if composed is None else a.task_of[composed]
        counts = np.bincount(composed, minlength=a.num_tasks)
        sizes.append(tuple(int(x) for x in counts))
        recips.append(reciprocal_size_sum(counts))
    train_loss = mean_cross_entropy(trace.logits.data, g.labels, g.train_mask)
    val_loss = mean_cross_entropy(trace.logits.data, g.labels, g.val_mask)
    return BoundLedger(task_sizes=tuple(sizes),
                       reciprocal_sums=tuple(recips),
                       per_class_train_loss=report.per_class_ce,
                       range_ce=report.range_ce,
                       train_loss=train_loss, val_loss=val_loss,
                       gap=val_loss - train_loss)
