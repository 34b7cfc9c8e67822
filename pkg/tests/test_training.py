"""Optimizer arithmetic, the training loop contract and the baselines."""

import numpy as np
import pytest

from tail2learn import graph, sbm
from tail2learn import model as M
from tail2learn import training as T

RNG = np.random.default_rng(12)


def tiny_config(**kw):
    defaults = dict(max_epochs=40, patience=40, seed=1, gamma=0.1, tau=0.7,
                    model=M.ModelConfig(hidden_dim=6, depth=2, dropout=0.0))
    defaults.update(kw)
    return T.TrainConfig(**defaults)


def split_graph(sizes=(6, 5, 4), seed=2):
    g = sbm.synth_longtail_sbm(list(sizes), 5, 0.6, 0.05, noise=0.3,
                               seed=seed)
    return graph.sample_splits(g, graph.SplitSpec(ratios=(2, 1, 2), seed=seed))


def test_adam_zero_gradient_keeps_params():
    cfg = tiny_config(weight_decay=0.0)
    params = {"w": RNG.standard_normal((3, 2))}
    before = params["w"].copy()
    state = T.AdamState.init(params)
    T.adam_step(params, {"w": np.zeros((3, 2))}, state, cfg)
    assert np.array_equal(params["w"], before)


def test_adam_first_step_magnitude_is_lr():
    cfg = tiny_config(weight_decay=0.0, lr=0.01)
    g = 0.37
    params = {"w": np.array([[1.0]])}
    state = T.AdamState.init(params)
    T.adam_step(params, {"w": np.array([[g]])}, state, cfg)
    expected = cfg.lr * g / (np.sqrt(g * g) + cfg.eps_adam)
    assert params["w"][0, 0] == pytest.approx(1.0 - expected, abs=1e-15)


def test_adam_sign_pattern_invariant_to_loss_scaling():
    cfg = tiny_config(weight_decay=0.0)
    g = RNG.standard_normal((4, 3))
    g[np.abs(g) < 0.1] = 0.5  # keep every entry clearly nonzero
    updates = []
    for c in (1.0, 7.3):
        params = {"w": np.zeros((4, 3))}
        state = T.AdamState.init(params)
        T.adam_step(params, {"w": c * g}, state, cfg)
        updates.append(params["w"])
    assert np.array_equal(np.sign(updates[0]), np.sign(updates[1]))


def test_adam_trajectories_bit_identical():
    cfg = tiny_config()
    runs = []
    for _ in range(2):
        params = {"w": np.linspace(0, 1, 6).reshape(2, 3)}
        state = T.AdamState.init(params)
        for step in range(5):
            grad = {"w": np.sin(params["w"] + step)}
            T.adam_step(params, grad, state, cfg)
        runs.append(params["w"])
    assert np.array_equal(runs[0], runs[1])


def test_training_reduces_classification_loss():
    g = split_graph()
    res = T.train(g, tiny_config(max_epochs=60, patience=60))
    assert res.logs[-1].report.l_nc < res.logs[0].report.l_nc


def test_training_deterministic_given_seed():
    g = split_graph()
    cfg = tiny_config(max_epochs=12, patience=12,
                      model=M.ModelConfig(hidden_dim=6, depth=2, dropout=0.3))
    a = T.train(g, cfg)
    b = T.train(g, cfg)
    for la, lb in zip(a.logs, b.logs):
        assert la.report == lb.report
        assert la.split_metrics == lb.split_metrics
    for name in a.model.params:
        assert np.array_equal(a.model.params[name], b.model.params[name])


def test_early_stop_frozen_metric_stops_at_patience():
    g = split_graph()
    cfg = tiny_config(lr=1e-30, max_epochs=50, patience=5)
    res = T.train(g, cfg)
    assert len(res.logs) == 5
    assert res.best_epoch == 0


def test_best_snapshot_dominates_earlier_epochs():
    g = split_graph()
    res = T.train(g, tiny_config(max_epochs=30, patience=30))
    best = res.best_metric
    vals = [log.split_metrics["val"].bacc for log in res.logs]
    assert best == max([v for v in vals] + [best])


def test_origin_baseline_is_pure_classification():
    g = split_graph()
    res = T.baseline_origin(g, tiny_config(max_epochs=10, patience=10))
    for log in res.logs:
        assert log.report.l_bcl == 0.0 and log.report.l_scl == 0.0
        assert abs(log.report.l_total - log.report.l_nc) <= 1e-12
    assert res.model.config.depth == 0


def test_reweight_formula_and_normalization():
    labels = [0] * 8 + [1] * 2
    g = graph.build_graph([], np.zeros((10, 1)), labels)
    g = g.with_masks(np.ones(10, bool), np.zeros(10, bool),
                     np.zeros(10, bool))
    w = T.class_reweight(g)
    assert np.allclose(w, [0.4, 1.6])
    assert w.mean() == pytest.approx(1.0, abs=1e-12)
    uniform = graph.build_graph([], np.zeros((4, 1)), [0, 0, 1, 1])
    uniform = uniform.with_masks(np.ones(4, bool), np.zeros(4, bool),
                                 np.zeros(4, bool))
    assert np.allclose(T.class_reweight(uniform), 1.0)


def test_weighted_ce_equals_unweighted_for_unit_weights():
    g = split_graph()
    cfg = tiny_config(max_epochs=5, patience=5)
    plain = T.baseline_origin(g, cfg)
    unit = T.train(g, T.origin_config(cfg),
                   class_weights=np.ones(g.num_classes))
    for la, lb in zip(plain.logs, unit.logs):
        assert la.report.l_nc == pytest.approx(lb.report.l_nc, abs=1e-12)


def test_oversample_zero_scale_is_identity():
    g = split_graph()
    aug, masks = T.oversample_graph(g, scale=0.0)
    assert aug is g
    assert masks["train"] is g.train_mask


def test_oversample_duplicates_copy_edges_and_flatten_histogram():
    g = split_graph(sizes=(8, 4, 2), seed=4)
    aug, masks = T.oversample_graph(g, scale=1.0)
    assert aug.n > g.n
    # duplicates carry the source's degree
    neighbors = {i: set() for i in range(aug.n)}
    for i, j in aug.edges:
        neighbors[i].add(j)
        neighbors[j].add(i)
    orig_deg = {i: set() for i in range(g.n)}
    for i, j in g.edges:
        orig_deg[i].add(j)
        orig_deg[j].add(i)
    dup_sources = np.repeat(
        [v for v in np.flatnonzero(g.train_mask)
         if int(g.labels[v]) in set(int(c) for c in T.tail_classes(g))], 1)
    for pos, src in enumerate(dup_sources):
        assert neighbors[g.n + pos] == orig_deg[int(src)]
    # flatter training histogram
    before = graph.class_histogram(g, g.train_mask)
    after = graph.class_histogram(aug, aug.train_mask)
    assert graph.imbalance_ratio(after) >= graph.imbalance_ratio(before)
    # duplicates never leak into reported splits
    assert masks["val"][g.n:].sum() == 0 and masks["test"][g.n:].sum() == 0
    res = T.baseline_oversample(g, tiny_config(max_epochs=3, patience=3))
    assert len(res.logs) == 3


def test_train_requires_masks():
    g = sbm.synth_longtail_sbm([4, 3], 3, 0.5, 0.1, seed=0)
    with pytest.raises(ValueError, match="masks"):
        T.train(g, tiny_config())
