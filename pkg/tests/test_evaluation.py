"""Metric formulas, exact identities and the bound ledger."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tail2learn import evaluation as E
from tail2learn import graph, losses, model as M, sbm


def cm(rows):
    return E.ConfusionMatrix(np.asarray(rows, dtype=np.int64))


def test_perfect_classifier_scores_one():
    m = E.metrics(cm([[3, 0], [0, 7]]))
    assert m.acc == m.bacc == m.macro_f1 == m.gmeans == 1.0


def test_hand_checked_two_class_matrix():
    m = E.metrics(cm([[10, 0], [5, 5]]))
    assert m.bacc == 0.75
    assert m.gmeans == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert m.acc == 0.75
    assert m.macro_f1 == pytest.approx((0.8 + 2 / 3) / 2, abs=1e-12)


def test_balanced_counts_make_bacc_equal_acc_exactly():
    rng = np.random.default_rng(17)
    for _ in range(300):
        t = int(rng.integers(2, 7))
        row_total = int(rng.integers(1, 30))
        counts = np.zeros((t, t), dtype=np.int64)
        for r in range(t):
            split = rng.multinomial(row_total, np.ones(t) / t)
            counts[r] = split
        m = E.metrics(E.ConfusionMatrix(counts))
        assert m.bacc == m.acc  # exact, not approximate


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(3)
    counts = rng.integers(0, 9, size=(4, 4))
    counts[np.diag_indices(4)] += 1
    base = E.metrics(E.ConfusionMatrix(counts))
    perm = rng.permutation(4)
    permuted = E.metrics(E.ConfusionMatrix(counts[np.ix_(perm, perm)]))
    assert base.acc == permuted.acc
    assert base.bacc == permuted.bacc
    assert base.macro_f1 == permuted.macro_f1
    assert base.gmeans == pytest.approx(permuted.gmeans, abs=1e-12)


def test_gmeans_zero_when_any_recall_zero_and_am_gm_holds():
    rng = np.random.default_rng(8)
    m = E.metrics(cm([[0, 4], [1, 5]]))
    assert m.gmeans == 0.0
    for _ in range(200):
        t = int(rng.integers(2, 6))
        counts = rng.integers(0, 12, size=(t, t))
        if counts.sum() == 0:
            continue
        met = E.metrics(E.ConfusionMatrix(counts))
        assert 0.0 <= met.gmeans <= met.bacc + 1e-12 <= 1.0 + 1e-12


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        E.metrics(cm([[0, 0], [0, 0]]))


def test_per_class_recall_flags_absent_classes():
    recalls, present = E.per_class_recall(cm([[4, 1], [0, 0]]))
    assert present.tolist() == [True, False]
    assert recalls[0] == pytest.approx(0.8)
    assert np.isnan(recalls[1])
    m = E.metrics(cm([[4, 1], [0, 0]]))
    assert m.bacc == 0.8  # absent class excluded


def test_per_class_recall_mean_matches_bacc():
    counts = np.array([[5, 1, 0], [2, 6, 1], [0, 0, 4]])
    recalls, present = E.per_class_recall(E.ConfusionMatrix(counts))
    m = E.metrics(E.ConfusionMatrix(counts))
    assert np.nanmean(recalls[present]) == pytest.approx(m.bacc, abs=1e-12)


def test_predictions_tie_goes_to_lower_class():
    logits = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])
    assert E.predictions(logits).tolist() == [0, 1]


def test_reciprocal_size_sum_uniform():
    assert E.reciprocal_size_sum([10, 10, 10, 10]) == pytest.approx(0.4)


def test_merged_reciprocal_check_reference_cases():
    before, after, holds = E.merged_reciprocal_check([3, 3], [0, 0])
    assert before == pytest.approx(2 / 3)
    assert after == pytest.approx(1 / 6)
    assert holds
    before, after, holds = E.merged_reciprocal_check([4, 2, 7], [0, 1, 2])
    assert before == after and holds


@given(st.lists(st.integers(min_value=1, max_value=50), min_size=1,
                max_size=10), st.integers(min_value=0, max_value=10 ** 6))
@settings(max_examples=300, deadline=None)
def test_merged_reciprocal_check_always_holds(counts, seed):
    rng = np.random.default_rng(seed)
    merge_map = rng.integers(0, len(counts), size=len(counts))
    _, _, holds = E.merged_reciprocal_check(counts, merge_map)
    assert holds


def test_merged_reciprocal_check_rejects_bad_input():
    with pytest.raises(ValueError):
        E.merged_reciprocal_check([], [])
    with pytest.raises(ValueError):
        E.merged_reciprocal_check([1, 0], [0, 0])


def make_trained_trace():
    g = sbm.synth_longtail_sbm([6, 5, 4], 4, 0.6, 0.05, seed=5)
    g = graph.sample_splits(g, graph.SplitSpec(ratios=(2, 1, 2), seed=5))
    cfg = M.ModelConfig(hidden_dim=4, depth=2, task_sizes=(3, 2), dropout=0.0)
    model = M.Tail2LearnModel.init(cfg, g.feature_dim, g.num_classes, g.n,
                                   seed=5)
    trace = M.forward(model, g)
    per_class = losses.per_class_cross_entropy(trace.logits.data, g.labels,
                                               g.train_mask, g.num_classes)
    report = losses.LossReport(
        l_nc=1.0, l_bcl_layers=(0.5, 0.5), l_bcl=0.5, l_scl=0.25, gamma=0.0,
        l_total=1.0, per_class_ce=tuple(float(x) for x in per_class),
        range_ce=losses.loss_range(per_class))
    return trace, report, g


def test_bound_ledger_sizes_cover_all_nodes_each_level():
    trace, report, g = make_trained_trace()
    ledger = E.bound_ledger(trace, report, g)
    assert len(ledger.task_sizes) == 2
    for sizes in ledger.task_sizes:
        assert sum(sizes) == g.n
    assert all(s >= 0 for sizes in ledger.task_sizes for s in sizes)
    assert ledger.reciprocal_sums[0] > 0
    # merging tasks can only lower the reciprocal sum
    assert ledger.reciprocal_sums[1] <= ledger.reciprocal_sums[0] + 1e-12
    assert ledger.gap == pytest.approx(ledger.val_loss - ledger.train_loss)
    assert ledger.range_ce == report.range_ce
