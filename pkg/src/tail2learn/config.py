"""Flat-key JSON run configuration.

One document drives every pipeline stage. Unknown keys are rejected so a
typo in a hyperparameter name fails loudly instead of silently using the
default. Exactly one of {dataset file paths, synthetic generator spec} must
be present.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace

from . import dataio
from .graph import LabeledGraph, SplitSpec, downsample_classes, sample_splits
from .model import ModelConfig
from .sbm import synth_longtail_sbm
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # dataset files
    edges: str | None = None
    features: str | None = None
    labels: str | None = None
    splits: str | None = None
    # synthetic generator
    synth_sizes: tuple[int, ...] | None = None
    synth_feature_dim: int = 16
    synth_p_in: float = 0.1
    synth_p_out: float = 0.01
    synth_noise: float = 0.5
    # preprocessing
    target_ratio: float | None = None
    quantile_p: float = 0.8
    split_ratios: tuple[float, float, float] = (1.0, 1.0, 8.0)
    min_train: int = 1
    # shared
    seed: int = 0
    # architecture
    hidden_dim: int = 16
    depth: int = 2
    task_sizes: tuple[int, ...] | None = None
    activation: str = "relu"
    dropout: float = 0.5
    gcn_variant: str = "vanilla"
    # optimization
    lr: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 10000
    patience: int = 1000
    gamma: float = 0.1
    tau: float = 1.0
    use_contrastive: bool = True
    selection_metric: str = "bacc"
    precision: str = "f64"
    oversample_scale: float = 1.0

    def __post_init__(self):
        has_files = any(v is not None
                        for v in (self.edges, self.features, self.labels))
        has_synth = self.synth_sizes is not None
        if has_files and has_synth:
            raise ValueError("config mixes dataset paths with a synthetic "
                             "spec; use exactly one")
        if not has_files and not has_synth:
            raise ValueError("config needs dataset paths or a synthetic spec")
        if has_files and None in (self.edges, self.features, self.labels):
            raise ValueError("dataset configs need edges, features and "
                             "labels paths")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def model_config(self) -> ModelConfig:
        return ModelConfig(hidden_dim=self.hidden_dim, depth=self.depth,
                           task_sizes=self.task_sizes,
                           activation=self.activation, dropout=self.dropout,
                           gcn_variant=self.gcn_variant)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay,
                           max_epochs=self.max_epochs, patience=self.patience,
                           gamma=self.gamma, tau=self.tau, seed=self.seed,
                           use_contrastive=self.use_contrastive,
                           selection_metric=self.selection_metric,
                           precision=self.precision,
                           model=self.model_config())

    def split_spec(self) -> SplitSpec:
        return SplitSpec(ratios=self.split_ratios, seed=self.seed,
                         min_train=self.min_train)


_TUPLE_KEYS = {"synth_sizes", "task_sizes", "split_ratios"}
_KNOWN = {f.name for f in fields(RunConfig)}


def config_from_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    clean = {}
    for key, value in raw.items():
        if key in _TUPLE_KEYS and value is not None:
            value = tuple(value)
        clean[key] = value
    return RunConfig(**clean)


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    cfg = config_from_dict(raw)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def build_graph_from_config(cfg: RunConfig, with_splits: bool = True) \
        -> LabeledGraph:
    """Load or generate the configured graph, optionally with splits."""
    if cfg.synth_sizes is not None:
        g = synth_longtail_sbm(cfg.synth_sizes, cfg.synth_feature_dim,
                               cfg.synth_p_in, cfg.synth_p_out,
                               noise=cfg.synth_noise, seed=cfg.seed)
        if cfg.target_ratio is not None:
            g = downsample_classes(g, cfg.target_ratio, p=cfg.quantile_p)
    else:
        g = dataio.load_dataset(cfg.edges, cfg.features, cfg.labels,
                                cfg.splits)
    if with_splits and g.train_mask is None:
        g = sample_splits(g, cfg.split_spec())
    return g
