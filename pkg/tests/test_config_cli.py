"""Run configuration parsing and the command-line surface."""

import csv
import json
import os

import numpy as np
import pytest

from tail2learn import cli, config


def write_cfg(tmp_path, **overrides):
    doc = {
        "synth_sizes": [16, 10, 6],
        "synth_feature_dim": 6,
        "synth_p_in": 0.4,
        "synth_p_out": 0.02,
        "synth_noise": 0.4,
        "split_ratios": [2, 1, 2],
        "seed": 3,
        "hidden_dim": 6,
        "depth": 2,
        "dropout": 0.1,
        "max_epochs": 12,
        "patience": 12,
        "gamma": 0.1,
        "tau": 0.7,
    }
    doc.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_unknown_key_rejected(tmp_path):
    path = write_cfg(tmp_path, learning_rate=0.1)  # typo for lr
    with pytest.raises(ValueError, match="learning_rate"):
        config.load_config(path)


def test_mixed_dataset_and_synth_rejected(tmp_path):
    path = write_cfg(tmp_path, edges="x.edges", features="x.csv",
                     labels="x.labels")
    with pytest.raises(ValueError, match="exactly one"):
        config.load_config(path)


def test_config_hash_stable_and_sensitive(tmp_path):
    a = config.load_config(write_cfg(tmp_path))
    assert config.config_hash(a) == config.config_hash(a)
    b = config.load_config(write_cfg(tmp_path, seed=4))
    assert config.config_hash(a) != config.config_hash(b)


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_gen_then_stats_then_train_eval(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "data"
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    run_dir = next(p for p in out.iterdir() if p.is_dir())
    files = {p.name for p in run_dir.iterdir()}
    assert {"graph.edges", "graph.features.csv", "graph.labels",
            "graph.splits", "config.json"} <= files

    assert run_cli("stats", "--edges", run_dir / "graph.edges",
                   "--features", run_dir / "graph.features.csv",
                   "--labels", run_dir / "graph.labels",
                   "--splits", run_dir / "graph.splits",
                   "--p", "0.8") == 0

    runs = tmp_path / "runs"
    assert run_cli("train", "--config", cfg, "--out", runs) == 0
    train_dir = next(p for p in runs.iterdir() if p.is_dir())
    produced = {p.name for p in train_dir.iterdir()}
    assert {"log.csv", "metrics.csv", "per_class.csv", "bound_ledger.csv",
            "model.ckpt", "predictions.tsv", "config.json"} <= produced

    with open(train_dir / "log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert "wall_ms" in rows[0]

    with open(train_dir / "predictions.tsv") as fh:
        preds = [line.split("\t") for line in fh.read().splitlines()]
    assert len(preds) == 32

    evalout = tmp_path / "evalout"
    assert run_cli("eval", "--ckpt", train_dir / "model.ckpt",
                   "--edges", run_dir / "graph.edges",
                   "--features", run_dir / "graph.features.csv",
                   "--labels", run_dir / "graph.labels",
                   "--splits", run_dir / "graph.splits",
                   "--out", evalout) == 0
    assert (evalout / "metrics.csv").exists()


def test_train_refuses_overwrite_without_force(tmp_path, capsys):
    cfg = write_cfg(tmp_path, max_epochs=3, patience=3)
    runs = tmp_path / "runs"
    assert run_cli("train", "--config", cfg, "--out", runs) == 0
    assert run_cli("train", "--config", cfg, "--out", runs) == 1
    assert "force" in capsys.readouterr().err
    assert run_cli("train", "--config", cfg, "--out", runs, "--force") == 0


def test_train_baseline_dispatch(tmp_path):
    cfg = write_cfg(tmp_path, max_epochs=4, patience=4)
    for baseline in ("origin", "reweight", "oversample"):
        out = tmp_path / f"runs-{baseline}"
        assert run_cli("train", "--config", cfg, "--out", out,
                       "--baseline", baseline) == 0
        run_dir = next(p for p in out.iterdir() if p.is_dir())
        with open(run_dir / "log.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert float(rows[0]["l_bcl"]) == 0.0
        assert float(rows[0]["l_scl"]) == 0.0


def test_gen_rejects_bad_probabilities(tmp_path, capsys):
    cfg = write_cfg(tmp_path, synth_p_in=0.01, synth_p_out=0.5)
    assert run_cli("gen", "--config", cfg, "--out", tmp_path / "x") == 1
    assert "probabilities" in capsys.readouterr().err


def test_ablate_shape(tmp_path):
    cfg = write_cfg(tmp_path, max_epochs=6, patience=6)
    out = tmp_path / "ab"
    assert run_cli("ablate", "--config", cfg, "--seeds", "2",
                   "--out", out) == 0
    run_dir = next(p for p in out.iterdir() if p.is_dir())
    with open(run_dir / "ablate.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["variant", "acc", "bacc", "macro_f1", "gmeans"]
    assert [r[0] for r in rows[1:]] == ["full", "m1_ce", "ce_only"]
    assert all(len(r) == 5 for r in rows[1:])


def test_sweep_grid_rows(tmp_path, capsys):
    cfg = write_cfg(tmp_path, max_epochs=5, patience=5)
    out = tmp_path / "sw"
    assert run_cli("sweep", "--config", cfg, "--gamma", "0.01", "--gamma",
                   "0.1", "--tau", "0.5", "--tau", "1.0", "--tau", "2.0",
                   "--out", out) == 0
    run_dir = next(p for p in out.iterdir() if p.is_dir())
    with open(run_dir / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert "spread" in capsys.readouterr().out


def test_bench_rows_and_slope(tmp_path, capsys):
    out = tmp_path / "bench"
    assert run_cli("bench", "--sizes", "200", "400", "--epochs", "2",
                   "--out", out) == 0
    run_dir = next(p for p in out.iterdir() if p.is_dir())
    with open(run_dir / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in rows] == [200, 400]
    times = [float(r["median_epoch_ms"]) for r in rows]
    assert times[1] >= times[0] * 0.5  # sanity: no wild nonsense
    assert "slope" in capsys.readouterr().out


def test_cli_determinism_excluding_wall_clock(tmp_path):
    cfg = write_cfg(tmp_path, max_epochs=8, patience=8)
    logs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert run_cli("train", "--config", cfg, "--out", out) == 0
        run_dir = next(p for p in out.iterdir() if p.is_dir())
        with open(run_dir / "log.csv") as fh:
            lines = fh.read().splitlines()
        logs.append([",".join(line.split(",")[:-1]) for line in lines])
    assert logs[0] == logs[1]
