"""Gradient checks for every primitive against central finite differences."""

import numpy as np
import pytest

from tail2learn import autodiff as ad
from tail2learn import sparse

from oracles import finite_difference_gradients, max_rel_error

RNG = np.random.default_rng(20240817)


def scalarize(t, weight):
    return ad.reduce_mean(ad.hadamard(t, ad.constant(weight)))


def check_op(build, params, n_trials_note=None, tol=1e-6, h=1e-6):
    """build(tape, leaf_tensors) -> output tensor; FD vs backward."""
    def loss_value(arrays):
        tape = ad.Tape()
        leafs = {k: tape.param(v) for k, v in arrays.items()}
        return float(build(tape, leafs).data[0, 0])

    tape = ad.Tape()
    leafs = {k: tape.param(v) for k, v in params.items()}
    loss = build(tape, leafs)
    grads = ad.backward(tape, loss)
    fd = finite_difference_gradients(loss_value, params, h=h)
    for name, leaf in leafs.items():
        err = max_rel_error(grads[leaf.node], fd[name])
        assert err < tol, f"{name}: rel err {err:.3e}"


def random_weight(shape):
    return RNG.standard_normal(shape)


@pytest.mark.parametrize("trial", range(20))
def test_matmul_grad(trial):
    n, k, m = RNG.integers(1, 6, 3)
    a = RNG.standard_normal((n, k))
    b = RNG.standard_normal((k, m))
    w = random_weight((n, m))
    check_op(lambda t, l: scalarize(ad.matmul(l["a"], l["b"]), w),
             {"a": a, "b": b})


@pytest.mark.parametrize("trial", range(20))
def test_spmm_grad(trial):
    n, k, m = RNG.integers(1, 7, 3)
    mask = RNG.random((n, k)) < 0.5
    rows, cols = np.nonzero(mask)
    s = sparse.from_coo(n, k, rows, cols, RNG.standard_normal(len(rows)))
    b = RNG.standard_normal((k, m))
    w = random_weight((n, m))
    check_op(lambda t, l: scalarize(ad.spmm(s, l["b"]), w), {"b": b})


@pytest.mark.parametrize("op_name", ["add", "sub", "hadamard"])
def test_binary_elementwise_grads(op_name):
    op = getattr(ad, op_name)
    for _ in range(20):
        shape = tuple(RNG.integers(1, 6, 2))
        a, b = RNG.standard_normal(shape), RNG.standard_normal(shape)
        w = random_weight(shape)
        check_op(lambda t, l: scalarize(op(l["a"], l["b"]), w),
                 {"a": a, "b": b})


@pytest.mark.parametrize("trial", range(20))
def test_scale_and_unary_grads(trial):
    shape = tuple(RNG.integers(1, 6, 2))
    w = random_weight(shape)
    a = RNG.standard_normal(shape)
    check_op(lambda t, l: scalarize(ad.scale(l["a"], -1.7), w), {"a": a})
    check_op(lambda t, l: scalarize(ad.exp(l["a"]), w), {"a": a * 0.5})
    check_op(lambda t, l: scalarize(ad.sigmoid(l["a"]), w), {"a": a})
    pos = np.abs(a) + 0.2
    check_op(lambda t, l: scalarize(ad.log(l["a"]), w), {"a": pos})
    # keep entries away from the relu kink so differences stay two-sided
    far = np.where(np.abs(a) < 1e-3, 0.5, a)
    check_op(lambda t, l: scalarize(ad.relu(l["a"]), w), {"a": far})


@pytest.mark.parametrize("trial", range(20))
def test_gather_scatter_grads(trial):
    n, k = int(RNG.integers(2, 7)), int(RNG.integers(1, 5))
    a = RNG.standard_normal((n, k))
    idx = RNG.integers(0, n, size=RNG.integers(1, 8))  # duplicates allowed
    w = random_weight((len(idx), k))
    check_op(lambda t, l: scalarize(ad.row_gather(l["a"], idx), w), {"a": a})

    m = int(RNG.integers(1, n + 1))
    distinct = RNG.permutation(n)[:m].astype(np.int64)
    b = RNG.standard_normal((m, k))
    w2 = random_weight((n, k))
    check_op(lambda t, l: scalarize(ad.row_scatter(l["b"], distinct, n), w2),
             {"b": b})


@pytest.mark.parametrize("trial", range(20))
def test_structure_op_grads(trial):
    n, k = int(RNG.integers(1, 6)), int(RNG.integers(1, 5))
    a = RNG.standard_normal((n, k))
    w = random_weight((k, n))
    check_op(lambda t, l: scalarize(ad.transpose(l["a"]), w), {"a": a})

    b = RNG.standard_normal((int(RNG.integers(1, 4)), k))
    w2 = random_weight((n + b.shape[0], k))
    check_op(lambda t, l: scalarize(ad.concat_rows(l["a"], l["b"]), w2),
             {"a": a, "b": b})

    v = RNG.standard_normal((n, 1))
    cols = int(RNG.integers(1, 5))
    w3 = random_weight((n, cols))
    check_op(lambda t, l: scalarize(ad.broadcast_col(l["v"], cols), w3),
             {"v": v})

    seg = RNG.integers(0, 3, size=n)
    w4 = random_weight((3, k))
    check_op(lambda t, l: scalarize(ad.segment_sum(l["a"], seg, 3), w4),
             {"a": a})


@pytest.mark.parametrize("trial", range(20))
def test_normalize_reduce_lse_grads(trial):
    n, k = int(RNG.integers(1, 6)), int(RNG.integers(1, 5))
    a = RNG.standard_normal((n, k)) + 0.1
    w = random_weight((n, k))
    check_op(lambda t, l: scalarize(ad.row_l2_normalize(l["a"]), w), {"a": a})

    check_op(lambda t, l: ad.reduce_mean(l["a"]), {"a": a})

    w5 = random_weight((n, 1))
    check_op(lambda t, l: scalarize(ad.logsumexp_row(l["a"]), w5), {"a": a})
    off = RNG.standard_normal(k)
    check_op(lambda t, l: scalarize(ad.logsumexp_row(l["a"], row_offset=off),
                                    w5), {"a": a})


@pytest.mark.parametrize("trial", range(20))
def test_cross_entropy_grad(trial):
    n, t = int(RNG.integers(2, 7)), int(RNG.integers(2, 5))
    logits = RNG.standard_normal((n, t))
    targets = RNG.integers(0, t, size=n)
    mask = RNG.random(n) < 0.7
    if not mask.any():
        mask[0] = True
    weights = np.abs(RNG.standard_normal(n)) + 0.1 if trial % 2 else None
    check_op(lambda tp, l: ad.softmax_cross_entropy(
        l["x"], targets, mask, weights=weights), {"x": logits})


def test_relu_forward_and_backward_values():
    tape = ad.Tape()
    x = tape.param(np.array([[-1.0, 2.0]]))
    y = ad.relu(x)
    assert np.array_equal(y.data, [[0.0, 2.0]])
    loss = ad.reduce_mean(ad.hadamard(y, ad.constant(np.array([[2.0, 2.0]]))))
    grads = ad.backward(tape, loss)
    assert np.array_equal(grads[x.node], [[0.0, 1.0]])


def test_gather_scatter_roundtrip():
    tape = ad.Tape()
    a = tape.param(np.arange(12.0).reshape(4, 3))
    idx = np.array([2, 0], dtype=np.int64)
    picked = ad.row_gather(a, idx)
    placed = ad.row_scatter(picked, idx, 4)
    expect = np.zeros((4, 3))
    expect[idx] = a.data[idx]
    assert np.array_equal(placed.data, expect)


def test_mean_sigmoid_matmul_matches_fd():
    x = RNG.standard_normal((4, 3))
    w = RNG.standard_normal((3, 2))

    def loss_value(arrays):
        tape = ad.Tape()
        wp = tape.param(arrays["w"])
        return float(ad.reduce_mean(
            ad.sigmoid(ad.matmul(ad.constant(x), wp))).data[0, 0])

    tape = ad.Tape()
    wp = tape.param(w)
    loss = ad.reduce_mean(ad.sigmoid(ad.matmul(ad.constant(x), wp)))
    grads = ad.backward(tape, loss)
    fd = finite_difference_gradients(loss_value, {"w": w}, h=1e-6)
    assert max_rel_error(grads[wp.node], fd["w"]) < 1e-6


def test_backward_is_linear():
    a = RNG.standard_normal((3, 3))
    tape = ad.Tape()
    x = tape.param(a)
    l1 = ad.reduce_mean(ad.exp(x))
    l2 = ad.reduce_mean(ad.hadamard(x, x))
    combo = ad.add(ad.scale(l1, 2.5), ad.scale(l2, -0.75))
    g1 = ad.backward(tape, l1)[x.node]
    g2 = ad.backward(tape, l2)[x.node]
    gc = ad.backward(tape, combo)[x.node]
    assert np.abs(gc - (2.5 * g1 - 0.75 * g2)).max() < 1e-12


def test_backward_deterministic_bitwise():
    def run():
        tape = ad.Tape()
        x = tape.param(np.linspace(-1, 1, 12).reshape(3, 4))
        y = tape.param(np.linspace(0.5, 2, 8).reshape(4, 2))
        z = ad.matmul(ad.relu(x), y)
        loss = ad.reduce_mean(ad.hadamard(z, z))
        g = ad.backward(tape, loss)
        return g[x.node], g[y.node]

    (gx1, gy1), (gx2, gy2) = run(), run()
    assert np.array_equal(gx1, gx2) and np.array_equal(gy1, gy2)


def test_unused_leaf_gets_zero_gradient():
    tape = ad.Tape()
    used = tape.param(np.ones((2, 2)))
    unused = tape.param(np.ones((3, 1)))
    loss = ad.reduce_mean(used)
    grads = ad.backward(tape, loss)
    assert np.array_equal(grads[unused.node], np.zeros((3, 1)))
    assert np.allclose(grads[used.node], 0.25)


def test_zero_scaled_loss_gives_zero_gradients():
    tape = ad.Tape()
    x = tape.param(RNG.standard_normal((3, 2)))
    loss = ad.scale(ad.reduce_mean(ad.exp(x)), 0.0)
    grads = ad.backward(tape, loss)
    assert np.array_equal(grads[x.node], np.zeros((3, 2)))


def test_non_scalar_loss_rejected():
    tape = ad.Tape()
    x = tape.param(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ad.backward(tape, ad.relu(x))


def test_non_finite_result_rejected():
    tape = ad.Tape()
    x = tape.param(np.array([[1000.0]]))
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        ad.exp(x)


def test_shape_mismatch_rejected():
    tape = ad.Tape()
    a = tape.param(np.ones((2, 3)))
    b = tape.param(np.ones((2, 3)))
    with pytest.raises(ValueError):
        ad.matmul(a, b)
    with pytest.raises(IndexError):
        ad.row_gather(a, [5])
    with pytest.raises(ValueError):
        ad.row_scatter(a, [0, 0], 4)
