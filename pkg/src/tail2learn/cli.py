"""Command-line interface.

Subcommands: gen, stats, train, eval, ablate, sweep, bench. Every run is
reproducible from its config plus seed; run directories are content-
addressed by a hash of the resolved configuration and refuse to overwrite
existing results unless --force is given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import dataio, kernels, runio
from .checkpoint import load_model
from .config import (RunConfig, build_graph_from_config, config_hash,
                     load_config)
from .graph import (class_histogram, imbalance_ratio, label_counts,
                    long_tailedness_ratio)
from .sbm import scale_profile, synth_longtail_sbm
from .training import (baseline_origin, baseline_oversample,
                       baseline_reweight, train)
from .graph import sample_splits

BENCH_PROFILE = (80, 40, 20, 10, 5, 5)
BENCH_BASE_N = sum(BENCH_PROFILE)


def _resolve_config(args, require=True) -> RunConfig | None:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "target_ratio", None) is not None:
        overrides["target_ratio"] = args.target_ratio
    if args.config is None:
        if require:
            raise ValueError("--config is required for this command")
        return None
    return load_config(args.config, overrides)


def _run_dir(args, cfg: RunConfig, extras: dict) -> str:
    doc = dict(cfg.to_dict(), **extras)
    digest = hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]
    run_dir = os.path.join(args.out, digest)
    if os.path.exists(run_dir) and os.listdir(run_dir) and not args.force:
        raise ValueError(f"{run_dir} already holds results; pass --force to "
                         "overwrite")
    os.makedirs(run_dir, exist_ok=True)
    return run_dir


def _write_config(run_dir: str, cfg: RunConfig, extras: dict) -> None:
    with open(os.path.join(run_dir, "config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(dict(cfg.to_dict(), **extras), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _print_stats(g, label, p_values):
    hist = class_histogram(g) if label == "full" else \
        class_histogram(g, g.train_mask)
    print(f"[{label}] histogram (desc): {list(hist.counts)}")
    if hist.absent:
        print(f"[{label}] classes without nodes: {list(hist.absent)}")
    print(f"[{label}] imbalance_ratio = {imbalance_ratio(hist):.6g}")
    for p in p_values:
        try:
            r = long_tailedness_ratio(hist, p)
            print(f"[{label}] ratio_lt(p={p:g}) = {r:.6g}")
        except ValueError as exc:
            print(f"[{label}] ratio_lt(p={p:g}) undefined: {exc}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _resolve_config(args)
    if cfg.synth_sizes is None:
        raise ValueError("gen needs a synthetic spec (synth_sizes) in the "
                         "config")
    run_dir = _run_dir(args, cfg, {"command": "gen"})
    g = build_graph_from_config(cfg, with_splits=True)
    paths = dataio.save_dataset(run_dir, g)
    _write_config(run_dir, cfg, {"command": "gen"})
    print(f"wrote {len(paths)} dataset files to {run_dir}")
    _print_stats(g, "full", [cfg.quantile_p])
    _print_stats(g, "train", [cfg.quantile_p])
    return 0


def cmd_stats(args) -> int:
    if args.config:
        cfg = _resolve_config(args)
        g = build_graph_from_config(cfg, with_splits=True)
    else:
        if not (args.edges and args.features and args.labels):
            raise ValueError("stats needs --config or --edges/--features/"
                             "--labels")
        g = dataio.load_dataset(args.edges, args.features, args.labels,
                                args.splits)
    p_values = args.p or [0.8]
    print(f"nodes={g.n} edges={len(g.edges)} classes={g.num_classes}")
    _print_stats(g, "full", p_values)
    if g.train_mask is not None and g.train_mask.any():
        _print_stats(g, "train", p_values)
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    extras = {"command": "train", "baseline": args.baseline or "none"}
    run_dir = _run_dir(args, cfg, extras)
    g = build_graph_from_config(cfg)
    tc = cfg.train_config()
    if args.baseline is None:
        result = train(g, tc)
    elif args.baseline == "origin":
        result = baseline_origin(g, tc)
    elif args.baseline == "reweight":
        result = baseline_reweight(g, tc)
    elif args.baseline == "oversample":
        result = baseline_oversample(g, tc, scale=cfg.oversample_scale)
    else:
        raise ValueError(f"unknown baseline {args.baseline!r}")
    paths = runio.write_run_artifacts(run_dir, g, result)
    _write_config(run_dir, cfg, extras)
    test = runio.evaluate_model(result.model, g)["split_metrics"]["test"]
    print(f"run {run_dir}: best epoch {result.best_epoch}, "
          f"val {cfg.selection_metric} {result.best_metric:.4f}, "
          f"test bacc {test.bacc:.4f}")
    print(f"wrote {len(paths) + 1} files")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.ckpt)
    g = dataio.load_dataset(args.edges, args.features, args.labels,
                            args.splits)
    if g.train_mask is None:
        # score everything that carries a label
        labeled = g.labels >= 0
        empty = np.zeros(g.n, dtype=bool)
        g = g.with_masks(empty, empty.copy(), labeled)
    os.makedirs(args.out, exist_ok=True)
    ev = runio.evaluate_model(model, g)
    runio.write_metrics_csv(os.path.join(args.out, "metrics.csv"),
                            ev["split_metrics"])
    runio.write_per_class_csv(os.path.join(args.out, "per_class.csv"), g,
                              ev["test_recalls"])
    runio.write_predictions(os.path.join(args.out, "predictions.tsv"),
                            ev["preds"])
    for split, m in ev["split_metrics"].items():
        print(f"{split}: acc={m.acc:.4f} bacc={m.bacc:.4f} "
              f"macro_f1={m.macro_f1:.4f} gmeans={m.gmeans:.4f}")
    return 0


ABLATION_VARIANTS = ("full", "m1_ce", "ce_only")


def ablation_config(cfg: RunConfig, variant: str) -> RunConfig:
    if variant == "full":
        return replace(cfg, use_contrastive=True)
    if variant == "m1_ce":
        return replace(cfg, use_contrastive=False)
    if variant == "ce_only":
        return replace(cfg, use_contrastive=False, depth=0, task_sizes=None)
    raise ValueError(f"unknown ablation variant {variant!r}")


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    if cfg.depth < 1:
        raise ValueError("ablation needs depth >= 1 in the base config")
    extras = {"command": "ablate", "seeds": args.seeds}
    run_dir = _run_dir(args, cfg, extras)
    rows = {}
    detail = []
    for variant in ABLATION_VARIANTS:
        cells = []
        for i in range(args.seeds):
            vcfg = replace(ablation_config(cfg, variant), seed=cfg.seed + i)
            g = build_graph_from_config(vcfg)
            result = train(g, vcfg.train_config())
            m = runio.evaluate_model(result.model, g)["split_metrics"]["test"]
            cells.append(m)
            detail.append((variant, vcfg.seed, m))
        rows[variant] = {name: float(np.mean([c.as_dict()[name]
                                              for c in cells]))
                         for name in runio.METRIC_NAMES}
    table = os.path.join(run_dir, "ablate.csv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("variant," + ",".join(runio.METRIC_NAMES) + "\n")
        for variant in ABLATION_VARIANTS:
            fh.write(variant + "," + ",".join(
                runio.fmt(rows[variant][m]) for m in runio.METRIC_NAMES)
                + "\n")
    with open(os.path.join(run_dir, "ablate_details.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("variant,seed," + ",".join(runio.METRIC_NAMES) + "\n")
        for variant, seed, m in detail:
            fh.write(f"{variant},{seed}," + ",".join(
                runio.fmt(m.as_dict()[k]) for k in runio.METRIC_NAMES) + "\n")
    _write_config(run_dir, cfg, extras)
    for variant in ABLATION_VARIANTS:
        print(f"{variant}: mean test bacc {rows[variant]['bacc']:.4f}")
    print(f"wrote {table}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    gammas = args.gamma or [cfg.gamma]
    taus = args.tau or [cfg.tau]
    extras = {"command": "sweep", "gammas": gammas, "taus": taus}
    run_dir = _run_dir(args, cfg, extras)
    table = os.path.join(run_dir, "sweep.csv")
    baccs = []
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("gamma,tau,seed," + ",".join(runio.METRIC_NAMES) + "\n")
        for gamma in gammas:
            for tau in taus:
                cell = replace(cfg, gamma=gamma, tau=tau)
                g = build_graph_from_config(cell)
                result = train(g, cell.train_config())
                m = runio.evaluate_model(result.model,
                                         g)["split_metrics"]["test"]
                baccs.append(m.bacc)
                fh.write(f"{runio.fmt(gamma)},{runio.fmt(tau)},{cell.seed},"
                         + ",".join(runio.fmt(m.as_dict()[k])
                                    for k in runio.METRIC_NAMES) + "\n")
                print(f"gamma={gamma:g} tau={tau:g}: test bacc {m.bacc:.4f}")
    _write_config(run_dir, cfg, extras)
    print(f"grid bacc spread (max - min): {max(baccs) - min(baccs):.4f}")
    print(f"wrote {table}")
    return 0


def bench_config(n: int, base: RunConfig | None) -> RunConfig:
    """Synthetic config for one benchmark size.

    Edge probabilities shrink with n to hold average degree constant; the
    default exercises the linear encoder/classifier path (the contrastive
    terms are quadratic in n and would mask the architecture's scaling).
    """
    scale = BENCH_BASE_N / n
    fields = {} if base is None else base.to_dict()
    fields.update(
        synth_sizes=tuple(scale_profile(BENCH_PROFILE, n)),
        edges=None, features=None, labels=None, splits=None,
        synth_p_in=min(1.0, 0.1 * scale), synth_p_out=min(1.0, 0.01 * scale),
        target_ratio=None)
    if base is None:
        fields.update(use_contrastive=False, gamma=0.0, dropout=0.1,
                      hidden_dim=32)
    if fields.get("task_sizes") is not None:
        fields["task_sizes"] = tuple(fields["task_sizes"])
    fields["synth_sizes"] = tuple(fields["synth_sizes"])
    return RunConfig(**fields)


def cmd_bench(args) -> int:
    base = _resolve_config(args, require=False)
    extras = {"command": "bench", "sizes": list(args.sizes),
              "epochs": args.epochs, "kernels": args.kernels}
    probe = bench_config(args.sizes[0], base)
    run_dir = _run_dir(args, probe, extras)
    backends = ["py", "c"] if args.kernels == "both" else [args.kernels]
    table = os.path.join(run_dir, "bench.csv")
    rows = []
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("backend,n,edges,epochs,median_epoch_ms,mean_epoch_ms,"
                 "total_ms\n")
        for backend in backends:
            previous = kernels.set_backend(backend)
            try:
                for n in args.sizes:
                    cell = bench_config(n, base)
                    cell = replace(cell, max_epochs=args.epochs,
                                   patience=args.epochs)
                    g = build_graph_from_config(cell)
                    result = train(g, cell.train_config())
                    walls = [log.wall_ms for log in result.logs]
                    # first epoch pays page-fault warmup; drop it when we can
                    timed = walls[1:] if len(walls) > 1 else walls
                    med_ms = float(np.median(timed))
                    rows.append((kernels.BACKEND, n, med_ms))
                    fh.write(f"{kernels.BACKEND},{n},{len(g.edges)},"
                             f"{len(walls)},{runio.fmt(med_ms)},"
                             f"{runio.fmt(np.mean(timed))},"
                             f"{runio.fmt(sum(walls))}\n")
                    print(f"[{kernels.BACKEND}] n={n}: "
                          f"{med_ms:.1f} ms/epoch (median)")
            finally:
                kernels.set_backend(previous)
    for backend in {r[0] for r in rows}:
        pts = [(np.log(r[1]), np.log(r[2])) for r in rows if r[0] == backend]
        if len(pts) >= 2:
            xs, ys = np.array(pts).T
            slope = float(np.polyfit(xs, ys, 1)[0])
            print(f"[{backend}] log-log slope of epoch time vs n: "
                  f"{slope:.3f}")
    _write_config(run_dir, probe, extras)
    print(f"wrote {table}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t2l",
        description="Long-tail node classification on graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, force=True):
        p.add_argument("--config", help="flat-key JSON run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default="runs", help="parent output directory")
        if force:
            p.add_argument("--force", action="store_true",
                           help="overwrite an existing run directory")

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--target-ratio", type=float,
                   help="down-sample tail classes to this long-tailedness "
                        "ratio")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("stats", help="report long-tail statistics")
    common(p, force=False)
    p.add_argument("--edges")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--splits")
    p.add_argument("--p", type=float, action="append",
                   help="quantile order (repeatable, default 0.8)")
    p.set_defaults(fn=cmd_stats, target_ratio=None)

    p = sub.add_parser("train", help="train the model or a baseline")
    common(p)
    p.add_argument("--baseline", choices=("origin", "reweight", "oversample"))
    p.set_defaults(fn=cmd_train, target_ratio=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits")
    p.add_argument("--out", default="eval-out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="full / encoder-only / plain ablation")
    common(p)
    p.add_argument("--seeds", type=int, default=5,
                   help="number of consecutive seeds per variant")
    p.set_defaults(fn=cmd_ablate, target_ratio=None)

    p = sub.add_parser("sweep", help="gamma x tau grid")
    common(p)
    p.add_argument("--gamma", type=float, action="append")
    p.add_argument("--tau", type=float, action="append")
    p.set_defaults(fn=cmd_sweep, target_ratio=None)

    p = sub.add_parser("bench", help="runtime scaling over graph sizes")
    common(p)
    p.add_argument("--sizes", type=int, nargs="+",
                   default=[1000, 5000, 10000, 30000])
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--kernels", choices=("auto", "py", "c", "both"),
                   default="auto")
    p.set_defaults(fn=cmd_bench, target_ratio=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, IndexError, FileNotFoundError, RuntimeError,
            ImportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
