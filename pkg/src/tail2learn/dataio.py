"""Plain-text dataset formats.

Four files describe a dataset:

* edges: one ``src<TAB>dst`` pair per line, 0-based ids, ``#`` comments
* features: CSV, row i holds the feature vector of node i (defines n)
* labels: one ``node_id<TAB>label`` per line, label -1 means unlabeled
* splits (optional): one ``node_id<TAB>{train|val|test}`` per line
"""

from __future__ import annotations

import os

import numpy as np

from .graph import LabeledGraph, build_graph

SPLIT_NAMES = ("train", "val", "test")


def read_edges(path: str) -> np.ndarray:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'src<TAB>dst'")
            pairs.append((int(parts[0]), int(parts[1])))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def write_edges(path: str, edges: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in edges:
            fh.write(f"{i}\t{j}\n")


def read_features(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)


def write_features(path: str, features: np.ndarray) -> None:
    np.savetxt(path, features, delimiter=",", fmt="%.17g")


def read_labels(path: str, n: int) -> np.ndarray:
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'node_id<TAB>label'")
            node, lab = int(parts[0]), int(parts[1])
            if not 0 <= node < n:
                raise IndexError(f"{path}:{lineno}: node id {node} out of range")
            labels[node] = lab
    return labels


def write_labels(path: str, labels: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, lab in enumerate(labels):
            fh.write(f"{i}\t{lab}\n")


def read_splits(path: str, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    masks = {name: np.zeros(n, dtype=bool) for name in SPLIT_NAMES}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in masks:
                raise ValueError(
                    f"{path}:{lineno}: expected 'node_id<TAB>{{train|val|test}}'")
            node = int(parts[0])
            if not 0 <= node < n:
                raise IndexError(f"{path}:{lineno}: node id {node} out of range")
            masks[parts[1]][node] = True
    return masks["train"], masks["val"], masks["test"]


def write_splits(path: str, g: LabeledGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, mask in zip(SPLIT_NAMES,
                              (g.train_mask, g.val_mask, g.test_mask)):
            if mask is None:
                continue
            for node in np.flatnonzero(mask):
                fh.write(f"{node}\t{name}\n")


def load_dataset(edges_path: str, features_path: str, labels_path: str,
                 splits_path: str | None = None) -> LabeledGraph:
    """Assemble a LabeledGraph from the text files."""
    features = read_features(features_path)
    n = features.shape[0]
    edges = read_edges(edges_path)
    labels = read_labels(labels_path, n)
    g = build_graph(edges, features, labels)
    if splits_path is not None:
        g = g.with_masks(*read_splits(splits_path, n))
    return g


def save_dataset(out_dir: str, g: LabeledGraph, prefix: str = "graph") -> dict:
    """Write the dataset files; returns the path of each written file."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, f"{prefix}.edges"),
        "features": os.path.join(out_dir, f"{prefix}.features.csv"),
        "labels": os.path.join(out_dir, f"{prefix}.labels"),
    }
    write_edges(paths["edges"], g.edges)
    write_features(paths["features"], g.features)
    write_labels(paths["labels"], g.labels)
    if g.train_mask is not None:
        paths["splits"] = os.path.join(out_dir, f"{prefix}.splits")
        write_splits(paths["splits"], g)
    return paths
