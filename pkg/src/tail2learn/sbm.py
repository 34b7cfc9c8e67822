"""Stochastic block model generator with long-tail class sizes.

Desk-scale stand-in for real long-tail graph datasets: class-pure blocks
with dense intra-class and sparse inter-class connectivity, plus noisy
class-prototype features.
"""

from __future__ import annotations

import numpy as np

from .graph import LabeledGraph, build_graph


def _sample_pair_indices(rng: np.random.Generator, total: int, k: int) -> np.ndarray:
    """k distinct integers from [0, total) by rejection, deterministic."""
    picked = np.unique(rng.integers(0, total, size=int(k * 1.2) + 16))
    while len(picked) < k:
        more = rng.integers(0, total, size=k)
        picked = np.unique(np.concatenate([picked, more]))
    return rng.permutation(picked)[:k]


def _within_block_edges(rng, offset: int, size: int, p: float) -> np.ndarray:
    total = size * (size - 1) // 2
    if total == 0 or p <= 0:
        return np.empty((0, 2), dtype=np.int64)
    k = rng.binomial(total, p)
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    flat = np.sort(_sample_pair_indices(rng, total, k))
    # enumerate pairs (i, j), i < j, grouped by i
    row_starts = np.concatenate([[0], np.cumsum(size - 1 - np.arange(size - 1))])
    i = np.searchsorted(row_starts, flat, side="right") - 1
    j = i + 1 + (flat - row_starts[i])
    return offset + np.stack([i, j], axis=1).astype(np.int64)


def _cross_block_edges(rng, off_a: int, size_a: int, off_b: int, size_b: int,
                       p: float) -> np.ndarray:
    total = size_a * size_b
    if total == 0 or p <= 0:
        return np.empty((0, 2), dtype=np.int64)
    k = rng.binomial(total, p)
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    flat = np.sort(_sample_pair_indices(rng, total, k))
    i = off_a + flat // size_b
    j = off_b + flat % size_b
    return np.stack([i, j], axis=1).astype(np.int64)


def class_means(num_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm, pairwise-distinct class prototype vectors.

    Orthonormal basis vectors when dim >= num_classes; random unit vectors
    otherwise.
    """
    if dim >= num_classes:
        means = np.zeros((num_classes, dim))
        means[np.arange(num_classes), np.arange(num_classes)] = 1.0
        return means
    means = rng.standard_normal((num_classes, dim))
    return means / np.linalg.norm(means, axis=1, keepdims=True)


def synth_longtail_sbm(sizes, feature_dim: int, p_in: float, p_out: float,
                       noise: float = 0.5, seed: int = 0) -> LabeledGraph:
    """Generate a fully labeled long-tail SBM graph.

    Nodes are grouped in contiguous class blocks ordered as given in
    ``sizes``; features are the class mean plus isotropic Gaussian noise.
    Byte-identical output for identical arguments.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValueError("every class size must be >= 1")
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError("edge probabilities must satisfy 0 <= p_out < p_in <= 1")
    rng = np.random.default_rng(seed)
    num_classes = len(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])

    chunks = []
    for a in range(num_classes):
        chunks.append(_within_block_edges(rng, offsets[a], sizes[a], p_in))
        for b in range(a + 1, num_classes):
            chunks.append(_cross_block_edges(rng, offsets[a], sizes[a],
                                             offsets[b], sizes[b], p_out))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), np.int64)

    labels = np.repeat(np.arange(num_classes, dtype=np.int64), sizes)
    means = class_means(num_classes, feature_dim, rng)
    features = means[labels] + noise * rng.standard_normal((n, feature_dim))
    return build_graph(edges, features, labels, num_classes=num_classes)


def scale_profile(profile, total: int) -> list[int]:
    """Scale a class-size profile to roughly ``total`` nodes (floor 1)."""
    profile = np.asarray(profile, dtype=np.float64)
    sizes = np.maximum(1, np.round(profile * total / profile.sum()).astype(int))
    return [int(s) for s in sizes]
