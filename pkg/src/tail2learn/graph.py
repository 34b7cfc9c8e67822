"""Undirected attributed graphs with partial labels and long-tail statistics.

The central type is :class:`LabeledGraph`; everything downstream (encoder,
training, CLI) consumes it. Also home to the skewness metrics
(class-imbalance ratio and the quantile-based long-tailedness ratio),
stratified split sampling, and degree-guided down-sampling to a target
long-tailedness ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import sparse


@dataclass(frozen=True)
class LabeledGraph:
    """Undirected graph with node features and optional labels/masks.

    Edges are canonical: deduplicated, self-loop free, stored once as
    (i, j) with i < j, sorted lexicographically. ``labels[v] == -1`` means
    unlabeled. Masks, when present, are pairwise disjoint boolean vectors.
    """

    n: int
    edges: np.ndarray          # (m, 2) int64, i < j
    features: np.ndarray       # (n, d) float64
    labels: np.ndarray         # (n,) int64, -1 = unlabeled
    num_classes: int
    train_mask: np.ndarray | None = None
    val_mask: np.ndarray | None = None
    test_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.features.shape[0] != self.n:
            raise ValueError("features must have one row per node")
        if self.labels.shape != (self.n,):
            raise ValueError("labels must have length n")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise IndexError("edge endpoint index out of range")
        labeled = self.labels[self.labels >= 0]
        if len(labeled) and labeled.max() >= self.num_classes:
            raise ValueError("label id exceeds the class count")
        masks = [m for m in (self.train_mask, self.val_mask, self.test_mask)
                 if m is not None]
        for m in masks:
            if m.shape != (self.n,) or m.dtype != np.bool_:
                raise ValueError("masks must be boolean vectors of length n")
        if len(masks) > 1 and np.any(sum(m.astype(int) for m in masks) > 1):
            raise ValueError("masks must be pairwise disjoint")
        if self.train_mask is not None:
            present = np.zeros(self.num_classes, dtype=bool)
            tl = self.labels[self.train_mask & (self.labels >= 0)]
            present[tl] = True
            if not present.all():
                missing = np.flatnonzero(~present).tolist()
                raise ValueError(f"classes {missing} have no training node")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def adjacency(self) -> sparse.Csr:
        """Raw binary adjacency (no self loops)."""
        return sparse.adjacency_csr(self.n, self.edges)

    def with_masks(self, train: np.ndarray, val: np.ndarray,
                   test: np.ndarray) -> "LabeledGraph":
        return replace(self, train_mask=train, val_mask=val, test_mask=test)


@dataclass(frozen=True)
class ClassHistogram:
    """Per-class labeled-node counts, sorted descending.

    Classes with zero count under the requested mask are dropped from
    ``counts`` and listed in ``absent``.
    """

    counts: tuple[int, ...]
    total: int
    absent: tuple[int, ...] = ()

    def __post_init__(self):
        if any(c < 1 for c in self.counts):
            raise ValueError("histogram counts must be >= 1")
        if list(self.counts) != sorted(self.counts, reverse=True):
            raise ValueError("histogram counts must be non-increasing")
        if sum(self.counts) != self.total:
            raise ValueError("total must equal the sum of counts")

    @property
    def num_classes(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class SplitSpec:
    """Per-class stratified split with train:val:test ratios."""

    ratios: tuple[float, float, float] = (1.0, 1.0, 8.0)
    seed: int = 0
    min_train: int = 1

    def __post_init__(self):
        if any(r < 0 for r in self.ratios) or sum(self.ratios) <= 0:
            raise ValueError("split ratios must be nonnegative with positive sum")
        if self.min_train < 1:
            raise ValueError("min_train must be >= 1")


def build_graph(edge_list, features, labels=None,
                num_classes: int | None = None) -> LabeledGraph:
    """Construct a canonical LabeledGraph from raw inputs.

    Drops self loops, deduplicates edges regardless of orientation, and
    infers the class count as 1 + max label unless overridden.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be a 2-d matrix")
    n = features.shape[0]
    edges = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise IndexError("edge endpoint index out of range")
    edges = edges[edges[:, 0] != edges[:, 1]]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(edges) else \
        np.empty((0, 2), dtype=np.int64)
    if labels is None:
        lab = np.full(n, -1, dtype=np.int64)
    else:
        lab = np.asarray(labels, dtype=np.int64)
        if lab.shape != (n,):
            raise ValueError("labels must have length n")
        if np.any(lab < -1):
            raise ValueError("labels must be class ids or -1")
    if num_classes is None:
        num_classes = int(lab.max()) + 1 if np.any(lab >= 0) else 0
    return LabeledGraph(n=n, edges=edges, features=features, labels=lab,
                        num_classes=num_classes)


def normalized_adjacency(g: LabeledGraph) -> sparse.Csr:
    """Self-loop-augmented, symmetrically normalized adjacency."""
    return sparse.normalize_augmented(g.adjacency())


def first_order_adjacency(g: LabeledGraph) -> sparse.Csr:
    """First-order filter I + D^(-1/2) A D^(-1/2)."""
    return sparse.normalize_first_order(g.adjacency())


def label_counts(g: LabeledGraph, mask: np.ndarray | None = None) -> np.ndarray:
    """Labeled-node count per class id (length num_classes)."""
    sel = g.labels >= 0
    if mask is not None:
        sel = sel & mask
    return np.bincount(g.labels[sel], minlength=g.num_classes)


def class_histogram(g: LabeledGraph,
                    mask: np.ndarray | None = None) -> ClassHistogram:
    """Histogram of labeled nodes per class under an optional mask."""
    counts = label_counts(g, mask)
    if counts.sum() == 0:
        raise ValueError("no labeled nodes under the given mask")
    absent = tuple(int(c) for c in np.flatnonzero(counts == 0))
    kept = np.sort(counts[counts > 0])[::-1]
    return ClassHistogram(counts=tuple(int(c) for c in kept),
                          total=int(kept.sum()), absent=absent)


def imbalance_ratio(h: ClassHistogram) -> float:
    """Smallest class size divided by largest class size, in (0, 1]."""
    if not h.counts:
        raise ValueError("empty histogram")
    return min(h.counts) / max(h.counts)


def long_tailedness_ratio(h: ClassHistogram, p: float = 0.8) -> float:
    """Quantile-based skewness/complexity ratio Q(p) / (T - Q(p)).

    Q(p) is the smallest number of classes (largest first) whose cumulative
    share of instances reaches p. Larger values mean flatter distributions;
    values below 1 mean a small head holds share p.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if not h.counts:
        raise ValueError("empty histogram")
    t = h.num_classes
    cum = np.cumsum(h.counts)
    # relative slack so an exact integer hit of p*total is never missed
    q = int(np.searchsorted(cum, p * h.total - 1e-9 * h.total)) + 1
    if q >= t:
        raise ValueError(
            f"degenerate quantile: Q({p}) = {t} classes leaves an empty tail")
    return q / (t - q)


def _split_counts(n_c: int, spec: SplitSpec) -> tuple[int, int, int]:
    # Rounding rule: train gets max(min_train, floor share); val gets at
    # least one node when its ratio is positive and nodes remain; the
    # remainder is test.
    total = sum(spec.ratios)
    f_tr, f_va = spec.ratios[0] / total, spec.ratios[1] / total
    n_tr = min(n_c, max(spec.min_train, int(np.floor(n_c * f_tr))))
    floor_va = int(np.floor(n_c * f_va))
    want_va = max(1, floor_va) if spec.ratios[1] > 0 else floor_va
    n_va = min(n_c - n_tr, want_va)
    return n_tr, n_va, n_c - n_tr - n_va


def sample_splits(g: LabeledGraph, spec: SplitSpec) -> LabeledGraph:
    """Stratified per-class random split, deterministic under the seed."""
    rng = np.random.default_rng(spec.seed)
    train = np.zeros(g.n, dtype=bool)
    val = np.zeros(g.n, dtype=bool)
    test = np.zeros(g.n, dtype=bool)
    for c in range(g.num_classes):
        nodes = np.flatnonzero(g.labels == c)
        if len(nodes) < spec.min_train:
            raise ValueError(
                f"class {c} has {len(nodes)} labeled nodes, fewer than the "
                f"minimum train count {spec.min_train}")
        nodes = nodes[rng.permutation(len(nodes))]
        n_tr, n_va, _ = _split_counts(len(nodes), spec)
        train[nodes[:n_tr]] = True
        val[nodes[n_tr:n_tr + n_va]] = True
        test[nodes[n_tr + n_va:]] = True
    return g.with_masks(train, val, test)


def _induced_subgraph(g: LabeledGraph, alive: np.ndarray) -> LabeledGraph:
    keep = np.flatnonzero(alive)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    if len(g.edges):
        ok = alive[g.edges[:, 0]] & alive[g.edges[:, 1]]
        edges = remap[g.edges[ok]]
    else:
        edges = g.edges
    def cut(m):
        return m[keep] if m is not None else None
    return LabeledGraph(n=len(keep), edges=edges, features=g.features[keep],
                        labels=g.labels[keep], num_classes=g.num_classes,
                        train_mask=cut(g.train_mask), val_mask=cut(g.val_mask),
                        test_mask=cut(g.test_mask))


def downsample_classes(g: LabeledGraph, target_ratio: float, p: float = 0.8,
                       seed: int = 0, tol: float = 0.0) -> LabeledGraph:
    """Remove low-degree tail-class nodes until the ratio reaches the target.

    Classes are ranked by size; the tail share (1 - head share of roughly
    1 - p) loses one node per round, lowest degree first with ties broken by
    lower node id, never below one node per class. The seed parameter is
    reserved (the procedure is currently fully deterministic).
    """
    del seed
    current = np.ones(g.n, dtype=bool)
    deg = np.zeros(g.n, dtype=np.int64)
    neighbors: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in g.edges:
        neighbors[i].append(int(j))
        neighbors[j].append(int(i))
        deg[i] += 1
        deg[j] += 1
    counts = label_counts(g).astype(np.int64)

    def ratio_now() -> float:
        kept = np.sort(counts[counts > 0])[::-1]
        h = ClassHistogram(tuple(int(c) for c in kept), int(kept.sum()))
        return long_tailedness_ratio(h, p)

    if ratio_now() <= target_ratio + tol:
        return g

    order = np.lexsort((np.arange(g.num_classes), -counts))
    n_head = max(1, int(round((1.0 - p) * g.num_classes)))
    tail_classes = [int(c) for c in order[n_head:]]

    while True:
        removed_any = False
        for c in tail_classes:
            if counts[c] <= 1:
                continue
            cand = np.flatnonzero(current & (g.labels == c))
            victim = int(cand[np.lexsort((cand, deg[cand]))[0]])
            current[victim] = False
            counts[c] -= 1
            for u in neighbors[victim]:
                if current[u]:
                    deg[u] -= 1
            removed_any = True
            if ratio_now() <= target_ratio + tol:
                return _induced_subgraph(g, current)
        if not removed_any:
            raise ValueError(
                f"target ratio {target_ratio} unreachable: every tail class "
                "is down to one node")
