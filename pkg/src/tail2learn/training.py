"""Adam optimization, the training loop, and the classical baselines.

A run is fully determined by (graph, config): parameter init, dropout and
splits all derive from the config seed, and gradients accumulate in a fixed
order, so reruns reproduce every logged number except wall-clock times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import losses as L
from .evaluation import Metrics, confusion, metrics, predictions
from .graph import LabeledGraph, build_graph, label_counts
from .model import (ForwardTrace, ModelConfig, Tail2LearnModel, forward,
                    operator_cache)

SELECTION_METRICS = ("bacc", "acc", "macro_f1", "gmeans")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    max_epochs: int = 10000
    patience: int = 1000
    gamma: float = 0.1
    tau: float = 1.0
    seed: int = 0
    use_contrastive: bool = True
    selection_metric: str = "bacc"
    precision: str = "f64"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.gamma < 0 or self.tau <= 0:
            raise ValueError("gamma must be >= 0 and tau > 0")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must be in [1, max_epochs]")
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError(f"selection metric must be one of "
                             f"{SELECTION_METRICS}")
        if self.precision not in ("f64", "f32"):
            raise ValueError("precision must be f64 or f32")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, weight decay coupled into the
    gradient, parameters updated in place."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)


@dataclass
class EpochLog:
    epoch: int
    report: L.LossReport
    split_metrics: dict[str, Metrics]  # train / val / test
    wall_ms: float


@dataclass
class TrainResult:
    model: Tail2LearnModel
    logs: list[EpochLog]
    best_epoch: int
    best_metric: float

    def eval_trace(self, g: LabeledGraph) -> ForwardTrace:
        return forward(self.model, g, "eval")


def _layer_assignment(trace: ForwardTrace, g: LabeledGraph, layer: int):
    z = trace.z_levels[layer].data
    protos = trace.z_levels[layer + 1].data
    if layer == 0 and protos.shape[0] == g.num_classes and \
            g.train_mask is not None:
        return L.class_aligned_assignment(z, protos, g.labels, g.train_mask)
    return L.nearest_prototype_assignment(z, protos)


def _epoch_losses(trace: ForwardTrace, g: LabeledGraph, cfg: TrainConfig,
                  class_weights: np.ndarray | None):
    nc = L.nc_loss(trace.logits, g.labels, g.train_mask, class_weights)
    bcl_layers: list[ad.Tensor] = []
    bcl = scl = None
    if cfg.use_contrastive and trace.pools:
        for layer in range(len(trace.pools)):
            assignment = _layer_assignment(trace, g, layer)
            bcl_layers.append(L.bcl_loss(trace.z_levels[layer],
                                         trace.z_levels[layer + 1],
                                         assignment, cfg.tau))
        acc = bcl_layers[0]
        for extra in bcl_layers[1:]:
            acc = ad.add(acc, extra)
        bcl = ad.scale(acc, 1.0 / len(bcl_layers))
    if cfg.use_contrastive:
        scl = L.scl_loss(trace.z_final, g.labels, g.train_mask, cfg.tau)
    total = L.total_loss(nc, bcl, scl, cfg.gamma)
    return nc, bcl_layers, bcl, scl, total


def _split_metrics(logits: np.ndarray, g: LabeledGraph,
                   masks: dict[str, np.ndarray]) -> dict[str, Metrics]:
    preds = predictions(logits)
    out = {}
    for name, mask in masks.items():
        cm = confusion(g.labels, preds, g.num_classes, mask)
        out[name] = metrics(cm)
    return out


def train(g: LabeledGraph, cfg: TrainConfig,
          class_weights: np.ndarray | None = None,
          metric_masks: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Optimize the full objective with early stopping on a validation
    metric; returns the best-validation parameter snapshot.

    ``metric_masks`` overrides the masks used for reported metrics (the
    oversampling baseline scores original nodes only this way); the loss
    always uses the graph's own training mask.
    """
    if g.train_mask is None or g.val_mask is None or g.test_mask is None:
        raise ValueError("training requires train/val/test masks")
    cache = operator_cache(g, cfg.model.gcn_variant, cfg.dtype)
    model = Tail2LearnModel.init(cfg.model, g.feature_dim, g.num_classes,
                                 g.n, seed=cfg.seed, dtype=cfg.dtype)
    adam = AdamState.init(model.params)
    dropout_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0xD0,)))
    masks = metric_masks or {"train": g.train_mask, "val": g.val_mask,
                             "test": g.test_mask}

    init_trace = forward(model, g, "eval", cache=cache)
    best_metric = _split_metrics(init_trace.logits.data, g, masks)["val"] \
        .as_dict()[cfg.selection_metric]
    best_epoch = 0
    best_params = model.copy_params()
    logs: list[EpochLog] = []

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        try:
            trace = forward(model, g, "train", rng=dropout_rng, cache=cache)
            nc, bcl_layers, bcl, scl, total = _epoch_losses(
                trace, g, cfg, class_weights)
            grads = trace.gradients(total)
        except FloatingPointError as exc:
            raise RuntimeError(f"training diverged at epoch {epoch}: {exc}") \
                from exc
        adam_step(model.params, grads, adam, cfg)

        eval_trace = forward(model, g, "eval", cache=cache)
        split = _split_metrics(eval_trace.logits.data, g, masks)
        per_class = L.per_class_cross_entropy(
            trace.logits.data, g.labels, g.train_mask, g.num_classes)
        report = L.LossReport(
            l_nc=float(nc.data[0, 0]),
            l_bcl_layers=tuple(float(b.data[0, 0]) for b in bcl_layers),
            l_bcl=float(bcl.data[0, 0]) if bcl is not None else 0.0,
            l_scl=float(scl.data[0, 0]) if scl is not None else 0.0,
            gamma=cfg.gamma,
            l_total=float(total.data[0, 0]),
            per_class_ce=tuple(float(x) for x in per_class),
            range_ce=L.loss_range(per_class))
        wall_ms = (time.perf_counter() - t0) * 1000.0
        logs.append(EpochLog(epoch=epoch, report=report, split_metrics=split,
                             wall_ms=wall_ms))

        current = split["val"].as_dict()[cfg.selection_metric]
        if current > best_metric:
            best_metric = current
            best_epoch = epoch
            best_params = model.copy_params()
        elif epoch - best_epoch >= cfg.patience:
            break

    model.load_params(best_params)
    return TrainResult(model=model, logs=logs, best_epoch=best_epoch,
                       best_metric=best_metric)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def origin_config(cfg: TrainConfig) -> TrainConfig:
    """Plain GCN encoder + classifier: no pooling, no contrastive terms."""
    return replace(cfg, use_contrastive=False,
                   model=replace(cfg.model, depth=0, task_sizes=None))


def baseline_origin(g: LabeledGraph, cfg: TrainConfig) -> TrainResult:
    return train(g, origin_config(cfg))


def class_reweight(g: LabeledGraph) -> np.ndarray:
    """Inverse-frequency class weights n/(T*n_t), normalized to mean one."""
    counts = label_counts(g, g.train_mask).astype(np.float64)
    if (counts == 0).any():
        raise ValueError("every class needs a training node for reweighting")
    w = counts.sum() / (len(counts) * counts)
    return w * (len(w) / w.sum())


def baseline_reweight(g: LabeledGraph, cfg: TrainConfig) -> TrainResult:
    return train(g, origin_config(cfg), class_weights=class_reweight(g))


def tail_classes(g: LabeledGraph, head_share: float = 0.2) -> np.ndarray:
    """Class ids outside the `head_share` largest classes by train count."""
    counts = label_counts(g, g.train_mask)
    order = np.lexsort((np.arange(g.num_classes), -counts))
    n_head = max(1, int(round(head_share * g.num_classes)))
    return np.sort(order[n_head:])


def oversample_graph(g: LabeledGraph, scale: float = 1.0) \
        -> tuple[LabeledGraph, dict[str, np.ndarray]]:
    """Duplicate tail-class training nodes, copying each source's edges.

    Returns the augmented graph plus metric masks restricted to the
    original nodes (duplicates train, but are never scored).
    """
    copies = int(round(scale))
    metric_masks_orig = {"train": g.train_mask, "val": g.val_mask,
                         "test": g.test_mask}
    if copies <= 0:
        return g, metric_masks_orig
    tails = set(int(c) for c in tail_classes(g))
    sources = [v for v in np.flatnonzero(g.train_mask)
               if int(g.labels[v]) in tails]
    dup_src = np.repeat(np.asarray(sources, dtype=np.int64), copies)

    neighbors = [[] for _ in range(g.n)]
    for i, j in g.edges:
        neighbors[i].append(int(j))
        neighbors[j].append(int(i))
    extra = []
    for pos, src in enumerate(dup_src):
        dup = g.n + pos
        extra.extend((nbr, dup) for nbr in neighbors[src])
    edges = np.concatenate([g.edges, np.asarray(extra, np.int64).reshape(-1, 2)]) \
        if extra else g.edges

    features = np.concatenate([g.features, g.features[dup_src]])
    labels = np.concatenate([g.labels, g.labels[dup_src]])

    def pad(mask, fill):
        return np.concatenate([mask, np.full(len(dup_src), fill, dtype=bool)])

    aug = build_graph(edges, features, labels, num_classes=g.num_classes) \
        .with_masks(pad(g.train_mask, True), pad(g.val_mask, False),
                    pad(g.test_mask, False))
    metric_masks = {name: pad(mask, False)
                    for name, mask in metric_masks_orig.items()}
    return aug, metric_masks


def baseline_oversample(g: LabeledGraph, cfg: TrainConfig,
                        scale: float = 1.0) -> TrainResult:
    aug, metric_masks = oversample_graph(g, scale)
    return train(aug, origin_config(cfg), metric_masks=metric_masks)
