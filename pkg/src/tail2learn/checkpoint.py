"""Versioned binary model checkpoints.

Layout: 8 magic bytes, u32 version, u32 header length, JSON header
(architecture plus parameter names in order), then for each parameter a
u64 row count, u64 column count and row-major little-endian f64 data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, Tail2LearnModel

MAGIC = b"T2LMODEL"
VERSION = 1


def save_model(path: str, model: Tail2LearnModel) -> None:
    header = {
        "config": {
            "hidden_dim": model.config.hidden_dim,
            "depth": model.config.depth,
            "task_sizes": list(model.task_sizes),
            "activation": model.config.activation,
            "dropout": model.config.dropout,
            "gcn_variant": model.config.gcn_variant,
        },
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "params": list(model.params.keys()),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for name in header["params"]:
            arr = np.ascontiguousarray(model.params[name], dtype="<f8")
            fh.write(struct.pack("<QQ", *arr.shape))
            fh.write(arr.tobytes())


def load_model(path: str) -> Tail2LearnModel:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        params = {}
        for name in header["params"]:
            rows, cols = struct.unpack("<QQ", fh.read(16))
            data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
            if data.size != rows * cols:
                raise ValueError(f"{path}: truncated parameter {name}")
            params[name] = data.reshape(rows, cols).astype(np.float64)
    hc = header["config"]
    config = ModelConfig(hidden_dim=hc["hidden_dim"], depth=hc["depth"],
                         task_sizes=tuple(hc["task_sizes"]) or None,
                         activation=hc["activation"], dropout=hc["dropout"],
                         gcn_variant=hc["gcn_variant"])
    return Tail2LearnModel(config=config, feature_dim=header["feature_dim"],
                           num_classes=header["num_classes"],
                           task_sizes=tuple(hc["task_sizes"]), params=params)
