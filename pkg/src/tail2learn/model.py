"""The hierarchical encoder-decoder network.

An embedding GCN produces node embeddings; a stack of top-k pooling blocks
groups nodes into successively fewer task prototypes; a mirrored stack of
unpooling blocks restores the original resolution with skip connections,
and an affine classifier maps the fused embeddings to class logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import sparse
from .autodiff import Tape, Tensor
from .graph import LabeledGraph

ACTIVATIONS = ("relu", "sigmoid", "identity")
GCN_VARIANTS = ("vanilla", "first_order")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``task_sizes`` gives the node count kept by each pooling block; when
    None it defaults to (T, ceil(T/2), ...) for ``depth`` blocks, matching
    one task per class at the first block and halving afterwards.
    """

    hidden_dim: int = 16
    depth: int = 2
    task_sizes: tuple[int, ...] | None = None
    activation: str = "relu"
    dropout: float = 0.5
    gcn_variant: str = "vanilla"

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.gcn_variant not in GCN_VARIANTS:
            raise ValueError(f"gcn_variant must be one of {GCN_VARIANTS}")
        if self.task_sizes is not None and len(self.task_sizes) != self.depth:
            raise ValueError("task_sizes must have one entry per pooling block")

    def resolved_task_sizes(self, num_classes: int, n: int) -> tuple[int, ...]:
        if self.task_sizes is not None:
            sizes = tuple(int(k) for k in self.task_sizes)
        else:
            sizes = []
            k = num_classes
            for _ in range(self.depth):
                sizes.append(k)
                k = max(1, math.ceil(k / 2))
            sizes = tuple(sizes)
        prev = n
        for k in sizes:
            if not 1 <= k <= prev:
                raise ValueError(
                    f"task sizes must shrink strictly and fit the graph: "
                    f"{sizes} with n={n}")
            prev = k
        return sizes


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class Tail2LearnModel:
    """Parameter bundle; arrays are updated in place by the optimizer."""

    config: ModelConfig
    feature_dim: int
    num_classes: int
    task_sizes: tuple[int, ...]
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, config: ModelConfig, feature_dim: int, num_classes: int,
             n: int, seed: int = 0, dtype=np.float64) -> "Tail2LearnModel":
        """Glorot-uniform init with one deterministic substream per matrix."""
        task_sizes = config.resolved_task_sizes(num_classes, n)
        k = config.hidden_dim
        names: list[tuple[str, int, int]] = [("w_embed", feature_dim, k)]
        for layer in range(config.depth):
            names.append((f"w_pool_{layer}", k, k))
            names.append((f"p_pool_{layer}", 1, k))
        for layer in range(config.depth):
            names.append((f"w_unpool_{layer}", k, k))
        names.append(("w_cls", k, num_classes))
        seeds = np.random.SeedSequence(seed).spawn(len(names))
        params = {}
        for (name, rows, cols), ss in zip(names, seeds):
            rng = np.random.default_rng(ss)
            if name.startswith("p_pool"):
                # projection vector: fan_out of 1
                bound = math.sqrt(6.0 / (cols + 1))
                arr = rng.uniform(-bound, bound, size=(rows, cols))
            else:
                arr = _glorot(rng, rows, cols)
            params[name] = arr.astype(dtype)
        params["b_cls"] = np.zeros((1, num_classes), dtype=dtype)
        return cls(config=config, feature_dim=feature_dim,
                   num_classes=num_classes, task_sizes=task_sizes,
                   params=params)

    @property
    def dtype(self):
        return self.params["w_embed"].dtype

    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        for k, v in params.items():
            self.params[k][...] = v


@dataclass
class PoolResult:
    """Output of one top-k pooling block."""

    x_coarse: Tensor
    adj_coarse: sparse.Csr      # raw 0/1 adjacency of the kept nodes
    index: np.ndarray           # kept node ids, descending score order
    gate: Tensor                # sigmoid of the kept scores, (k, 1)
    scores: Tensor              # projection scores of every node, (n, 1)


@dataclass
class ForwardTrace:
    """Everything one forward pass produces, still attached to its tape."""

    tape: Tape
    param_leafs: dict[str, Tensor]  # name -> leaf tensor on this tape
    z_levels: list[Tensor]          # embeddings per level, n x K first
    pools: list[PoolResult]
    adj_raw: list[sparse.Csr]       # raw adjacency per level
    restored: list[Tensor]          # decoder outputs, deepest level first
    z_final: Tensor
    logits: Tensor
    level_sizes: list[int]

    def gradients(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Backpropagate a scalar loss into a name -> gradient map."""
        by_node = ad.backward(self.tape, loss)
        return {name: by_node[leaf.node]
                for name, leaf in self.param_leafs.items()}


def _activate(x: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return ad.relu(x)
    if activation == "sigmoid":
        return ad.sigmoid(x)
    return x


def gcn_forward(adj_norm: sparse.Csr, x: Tensor, w: Tensor,
                activation: str = "relu") -> Tensor:
    """One graph convolution: activation(adj_norm @ x @ w)."""
    return _activate(ad.spmm(adj_norm, ad.matmul(x, w), s_transposed=adj_norm),
                     activation)


def top_k_pool(z: Tensor, adj_raw: sparse.Csr, p: Tensor, k: int) -> PoolResult:
    """Keep the k nodes with the largest projection score.

    Scores are z @ p / ||p||; kept rows are gated by the sigmoid of their
    score and the kept adjacency is the principal submatrix. Ties go to the
    lower node id; the index list is in descending score order.
    """
    n = z.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} nodes")
    if float(np.linalg.norm(p.data)) < 1e-12:
        raise ValueError("projection vector has (near-)zero norm")
    scores = ad.matmul(z, ad.transpose(ad.row_l2_normalize(p)))
    s = scores.data[:, 0]
    idx = np.lexsort((np.arange(n), -s))[:k].astype(np.int64)
    gate = ad.sigmoid(ad.row_gather(scores, idx))
    x_sel = ad.row_gather(z, idx)
    x_coarse = ad.hadamard(x_sel, ad.broadcast_col(gate, z.shape[1]))
    return PoolResult(x_coarse=x_coarse, adj_coarse=sparse.submatrix(adj_raw, idx),
                      index=idx, gate=gate, scores=scores)


def unpool_rows(x_coarse: Tensor, index: np.ndarray, n: int) -> Tensor:
    """Place coarse rows back at their recorded positions, zeros elsewhere."""
    return ad.row_scatter(x_coarse, index, n)


def _normalize(adj: sparse.Csr, variant: str) -> sparse.Csr:
    if variant == "vanilla":
        return sparse.normalize_augmented(adj)
    return sparse.normalize_first_order(adj)


def operator_cache(g: LabeledGraph, variant: str = "vanilla",
                   dtype=np.float64) -> dict:
    """Precompute the per-graph constants reused across forward passes."""
    adj = g.adjacency()
    return {"adj_raw": adj, "adj_norm": _normalize(adj, variant),
            "variant": variant, "features": g.features.astype(dtype),
            "dtype": np.dtype(dtype)}


def forward(model: Tail2LearnModel, g: LabeledGraph, mode: str = "eval",
            rng: np.random.Generator | None = None,
            cache: dict | None = None) -> ForwardTrace:
    """Full encoder-decoder pass; dropout only in train mode."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be train or eval")
    if mode == "train" and model.config.dropout > 0.0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    cfg = model.config
    dtype = model.dtype
    if cache is None or cache.get("variant") != cfg.gcn_variant or \
            cache.get("dtype") != dtype:
        cache = operator_cache(g, cfg.gcn_variant, dtype)

    tape = Tape()
    leafs = {name: tape.param(arr) for name, arr in model.params.items()}
    x = ad.constant(cache["features"], dtype=dtype)

    def dropout(t: Tensor) -> Tensor:
        if mode != "train" or cfg.dropout == 0.0:
            return t
        keep = (rng.random(t.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
        return ad.hadamard(t, ad.constant(keep, dtype=dtype))

    z = dropout(gcn_forward(cache["adj_norm"], x, leafs["w_embed"],
                            cfg.activation))
    z_levels = [z]
    adj_raw = [cache["adj_raw"]]
    norm_adjs = [cache["adj_norm"]]
    pools: list[PoolResult] = []
    for layer, k in enumerate(model.task_sizes):
        pool = top_k_pool(z, adj_raw[-1], leafs[f"p_pool_{layer}"], k)
        pools.append(pool)
        adj_raw.append(pool.adj_coarse)
        norm_adjs.append(_normalize(pool.adj_coarse, cfg.gcn_variant))
        z = gcn_forward(norm_adjs[-1], pool.x_coarse, leafs[f"w_pool_{layer}"],
                        cfg.activation)
        z_levels.append(z)

    restored: list[Tensor] = []
    h = z_levels[-1]
    for layer in reversed(range(cfg.depth)):
        up = unpool_rows(h, pools[layer].index, z_levels[layer].shape[0])
        h = gcn_forward(norm_adjs[layer], up, leafs[f"w_unpool_{layer}"],
                        cfg.activation)
        h = ad.add(h, z_levels[layer])
        restored.append(h)

    z_final = dropout(h) if cfg.depth > 0 else z_levels[0]
    ones = ad.constant(np.ones((z_final.shape[0], 1)), dtype=dtype)
    logits = ad.add(ad.matmul(z_final, leafs["w_cls"]),
                    ad.matmul(ones, leafs["b_cls"]))
    return ForwardTrace(tape=tape, param_leafs=leafs, z_levels=z_levels,
                        pools=pools, adj_raw=adj_raw, restored=restored,
                        z_final=z_final, logits=logits,
                        level_sizes=[t.shape[0] for t in z_levels])
