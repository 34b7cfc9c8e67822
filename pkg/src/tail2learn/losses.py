"""Training objectives: classification loss, the two contrastive terms,
and the loss-range statistic.

Both contrastive losses treat embeddings as directions: rows are L2
normalized before any similarity, so dot products are cosines. Their
denominators weight each group's members by the reciprocal group size,
which equalizes the gradient contribution of large and small groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class TaskAssignment:
    """Node-to-task map for one pooling level.

    ``counts[t]`` is the number of assigned nodes (the task's prototype is
    a member of the task but not counted), so a task's member list has
    counts[t] + 1 entries.
    """

    task_of: np.ndarray   # (n,) int64
    num_tasks: int
    counts: np.ndarray    # (num_tasks,) int64

    def members(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.task_of == t)


def _normalize_rows(z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return np.where(norms < 1e-12, 0.0, z / np.where(norms < 1e-12, 1.0, norms))


def nearest_prototype_assignment(z: np.ndarray,
                                 prototypes: np.ndarray) -> TaskAssignment:
    """Assign every row to the prototype with the highest cosine similarity.

    Ties resolve to the lower prototype index.
    """
    if len(prototypes) == 0:
        raise ValueError("prototype set is empty")
    sims = _normalize_rows(z) @ _normalize_rows(prototypes).T
    task_of = np.argmax(sims, axis=1).astype(np.int64)
    counts = np.bincount(task_of, minlength=len(prototypes)).astype(np.int64)
    return TaskAssignment(task_of=task_of, num_tasks=len(prototypes),
                          counts=counts)


def class_aligned_assignment(z: np.ndarray, prototypes: np.ndarray,
                             labels: np.ndarray,
                             train_mask: np.ndarray) -> TaskAssignment:
    """Nearest-prototype assignment with training labels pinned.

    Each prototype takes the majority training label among its assignees as
    its class identity (ties to the lower class id); training nodes are then
    moved to the lowest-index prototype carrying their true class, keeping
    the proximity assignment only when no prototype claims their class.
    """
    base = nearest_prototype_assignment(z, prototypes)
    task_of = base.task_of.copy()
    labeled = np.flatnonzero(train_mask & (labels >= 0))
    identity = np.full(base.num_tasks, -1, dtype=np.int64)
    for t in range(base.num_tasks):
        mine = labeled[task_of[labeled] == t]
        if len(mine):
            identity[t] = np.bincount(labels[mine]).argmax()
    for i in labeled:
        owners = np.flatnonzero(identity == labels[i])
        if len(owners):
            task_of[i] = owners[0]
    counts = np.bincount(task_of, minlength=base.num_tasks).astype(np.int64)
    return TaskAssignment(task_of=task_of, num_tasks=base.num_tasks,
                          counts=counts)


def _row_dot(a: Tensor, b: Tensor) -> Tensor:
    ones = ad.constant(np.ones((a.shape[1], 1)), dtype=a.data.dtype)
    return ad.matmul(ad.hadamard(a, b), ones)


def bcl_loss(z: Tensor, prototypes: Tensor, assignment: TaskAssignment,
             tau: float) -> Tensor:
    """Balanced contrastive loss of nodes against task prototypes.

    Every node is pulled toward the members of its own task (its prototype
    included) and pushed from the rest; each task's block in the partition
    function is averaged by its member count, so head tasks cannot dominate.
    Log-sum-exp keeps the partition finite for temperatures down to 0.01.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if prototypes.shape[0] != assignment.num_tasks:
        raise ValueError("assignment does not match the prototype count")
    n = z.shape[0]
    zn = ad.row_l2_normalize(z)
    pn = ad.row_l2_normalize(prototypes)
    z_tau = ad.scale(zn, 1.0 / tau)

    members = ad.concat_rows(zn, pn)
    sims = ad.matmul(z_tau, ad.transpose(members))
    member_task = np.concatenate([assignment.task_of,
                                  np.arange(assignment.num_tasks)])
    log_w = -np.log(assignment.counts[member_task] + 1.0)
    log_denom = ad.logsumexp_row(sims, row_offset=log_w)

    task_sums = ad.segment_sum(zn, assignment.task_of, assignment.num_tasks)
    group = ad.row_gather(ad.add(task_sums, pn), assignment.task_of)
    pos_sum = _row_dot(z_tau, group)       # sum of similarities over own task
    self_sim = _row_dot(z_tau, zn)         # anchor's own term, removed below
    inv_count = ad.constant((1.0 / assignment.counts[assignment.task_of])
                            .reshape(n, 1), dtype=z.data.dtype)
    pos_mean = ad.hadamard(ad.sub(pos_sum, self_sim), inv_count)
    return ad.reduce_mean(ad.sub(log_denom, pos_mean))


def scl_loss(z_final: Tensor, labels: np.ndarray, train_mask: np.ndarray,
             tau: float) -> Tensor:
    """Supervised contrastive loss over labeled training nodes.

    Positives are same-class training nodes (mean over positive pairs);
    the partition function averages each class block by its size. Nodes
    whose class has a single training node contribute zero.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    anchors = np.flatnonzero(np.asarray(train_mask, bool) & (labels >= 0))
    if len(anchors) == 0:
        raise ValueError("no labeled training nodes")
    cls = labels[anchors]
    classes, seg_of = np.unique(cls, return_inverse=True)
    counts = np.bincount(seg_of, minlength=len(classes)).astype(np.int64)
    if counts.max() < 2:
        raise ValueError("supervised contrastive loss needs a class with "
                         ">= 2 training nodes")
    zn = ad.row_l2_normalize(ad.row_gather(z_final, anchors))
    z_tau = ad.scale(zn, 1.0 / tau)
    sims = ad.matmul(z_tau, ad.transpose(zn))
    log_w = -np.log(counts[seg_of].astype(np.float64))
    log_denom = ad.logsumexp_row(sims, row_offset=log_w)

    class_sums = ad.segment_sum(zn, seg_of, len(classes))
    group = ad.row_gather(class_sums, seg_of)
    pos_sum = _row_dot(z_tau, group)
    self_sim = _row_dot(z_tau, zn)
    dtype = z_final.data.dtype
    pairs = counts[seg_of] - 1
    inv_pairs = np.where(pairs > 0, 1.0 / np.maximum(pairs, 1), 0.0)
    has_pair = (pairs > 0).astype(dtype)
    pos_mean = ad.hadamard(ad.sub(pos_sum, self_sim),
                           ad.constant(inv_pairs.reshape(-1, 1), dtype=dtype))
    per_anchor = ad.hadamard(ad.sub(log_denom, pos_mean),
                             ad.constant(has_pair.reshape(-1, 1),
                                         dtype=dtype))
    return ad.reduce_mean(per_anchor)


def nc_loss(logits: Tensor, labels: np.ndarray, train_mask: np.ndarray,
            class_weights: np.ndarray | None = None) -> Tensor:
    """Mean softmax cross-entropy over labeled training nodes."""
    mask = np.asarray(train_mask, bool) & (labels >= 0)
    weights = None
    if class_weights is not None:
        weights = np.zeros(len(labels))
        weights[mask] = class_weights[labels[mask]]
    return ad.softmax_cross_entropy(logits, np.maximum(labels, 0), mask,
                                    weights=weights)


def total_loss(nc: Tensor, bcl: Tensor | None, scl: Tensor | None,
               gamma: float) -> Tensor:
    """nc + gamma * (bcl + scl); missing contrastive terms count as zero."""
    zero = ad.constant(np.zeros((1, 1)), dtype=nc.data.dtype)
    contrastive = ad.add(bcl if bcl is not None else zero,
                         scl if scl is not None else zero)
    return ad.add(nc, ad.scale(contrastive, gamma))


def per_class_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                            mask: np.ndarray, num_classes: int) -> np.ndarray:
    """Mean cross-entropy per class over masked labeled rows (NaN if absent)."""
    rows = np.flatnonzero(np.asarray(mask, bool) & (labels >= 0))
    out = np.full(num_classes, np.nan)
    if len(rows) == 0:
        return out
    sel = logits[rows]
    m = sel.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(sel - m).sum(axis=1, keepdims=True)))[:, 0]
    ce = lse - sel[np.arange(len(rows)), labels[rows]]
    for c in range(num_classes):
        pick = labels[rows] == c
        if pick.any():
            out[c] = float(ce[pick].mean())
    return out


def loss_range(per_task_losses) -> float:
    """Spread (max minus min) of per-task mean losses."""
    vals = np.asarray(per_task_losses, dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise ValueError("loss range of an empty vector")
    return float(vals.max() - vals.min())


@dataclass(frozen=True)
class LossReport:
    """Scalar loss values of one optimization step."""

    l_nc: float
    l_bcl_layers: tuple[float, ...]
    l_bcl: float
    l_scl: float
    gamma: float
    l_total: float
    per_class_ce: tuple[float, ...]
    range_ce: float

    def __post_init__(self):
        expected = self.l_nc + self.gamma * (self.l_bcl + self.l_scl)
        if abs(self.l_total - expected) > 1e-12:
            raise ValueError("loss report total is inconsistent")
