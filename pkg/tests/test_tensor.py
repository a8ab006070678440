"""Numeric core: op semantics, oracle equivalence, gradient correctness."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cenet_kws import tensor as T
from conftest import assert_grads_match


def t64(arr, grad=True):
    return T.Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


# -- forward semantics -------------------------------------------------------


def test_conv2d_identity_1x1():
    rng = np.random.default_rng(0)
    x = T.Tensor(rng.uniform(-1, 1, (2, 3, 5, 5)))
    w = np.zeros((3, 3, 1, 1), dtype=np.float32)
    for c in range(3):
        w[c, c, 0, 0] = 1.0
    out = T.conv2d(x, T.Tensor(w), stride=1, pad=0)
    np.testing.assert_array_equal(out.data, x.data)


def naive_conv(x, w, stride, pad):
    b, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((b, cout, ho, wo), dtype=x.dtype)
    for bi in range(b):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for ki in range(k):
                            for kj in range(k):
                                acc += xp[bi, ci, i * stride + ki, j * stride + kj] * w[co, ci, ki, kj]
                    out[bi, co, i, j] = acc
    return out


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 0, 1)])
def test_conv2d_matches_naive_loops(stride, pad, k):
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, (2, 3, 5, 5))
    w = rng.uniform(-1, 1, (4, 3, k, k))
    got = T.conv2d(T.Tensor(x, dtype=np.float64), T.Tensor(w, dtype=np.float64), stride, pad)
    np.testing.assert_allclose(got.data, naive_conv(x, w, stride, pad), atol=1e-6)


def test_conv2d_shape_arithmetic():
    x = T.Tensor(np.zeros((1, 8, 50, 20), dtype=np.float32))
    w = T.Tensor(np.zeros((8, 8, 3, 3), dtype=np.float32))
    assert T.conv2d(x, w, stride=2, pad=1).shape == (1, 8, 25, 10)


def test_conv2d_linearity():
    rng = np.random.default_rng(3)
    x = T.Tensor(rng.uniform(-1, 1, (1, 2, 6, 6)))
    y = T.Tensor(rng.uniform(-1, 1, (1, 2, 6, 6)))
    w = T.Tensor(rng.uniform(-1, 1, (3, 2, 3, 3)))
    lhs = T.conv2d(T.Tensor(2.0 * x.data + 3.0 * y.data), w, 1, 1).data
    rhs = 2.0 * T.conv2d(x, w, 1, 1).data + 3.0 * T.conv2d(y, w, 1, 1).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


def test_conv2d_errors():
    x = T.Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32))
    with pytest.raises(ValueError):
        T.conv2d(x, T.Tensor(np.zeros((2, 4, 3, 3), dtype=np.float32)))  # channel mismatch
    with pytest.raises(ValueError):
        T.conv2d(x, T.Tensor(np.zeros((2, 3, 5, 5), dtype=np.float32)))  # empty output


def test_avgpool_constant_and_window():
    const = T.Tensor(np.full((1, 1, 4, 4), 3.25, dtype=np.float32))
    np.testing.assert_allclose(T.avgpool2d(const, 2, 2).data, 3.25)
    quad = T.Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float32))
    assert T.avgpool2d(quad, 2, 2).data.item() == pytest.approx(2.5)
    with pytest.raises(ValueError):
        T.avgpool2d(quad, 3, 3)


def test_avgpool_matches_naive():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, (2, 3, 5, 7))
    got = T.avgpool2d(T.Tensor(x, dtype=np.float64), 2, 2).data
    want = np.zeros((2, 3, 2, 3))
    for bi in range(2):
        for ci in range(3):
            for i in range(2):
                for j in range(3):
                    want[bi, ci, i, j] = x[bi, ci, 2 * i:2 * i + 2, 2 * j:2 * j + 2].mean()
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_batchnorm_train_statistics():
    rng = np.random.default_rng(11)
    x = T.Tensor(rng.normal(3.0, 2.0, (4, 3, 8, 8)))
    bn_out = T.batchnorm2d(x, T.Tensor(np.ones(3, np.float32)), T.Tensor(np.zeros(3, np.float32)),
                           T.BNStats(3), train=True)
    mu = bn_out.data.mean(axis=(0, 2, 3))
    var = bn_out.data.var(axis=(0, 2, 3))
    assert np.abs(mu).max() < 1e-5
    assert np.abs(var - 1.0).max() < 1e-3


def test_batchnorm_infer_identity_with_unit_stats():
    rng = np.random.default_rng(12)
    x = T.Tensor(rng.normal(0, 1, (2, 3, 4, 4)))
    out = T.batchnorm2d(x, T.Tensor(np.ones(3, np.float32)), T.Tensor(np.zeros(3, np.float32)),
                        T.BNStats(3), train=False)
    np.testing.assert_allclose(out.data, x.data, atol=1e-4)


def test_batchnorm_zero_variance_guarded_by_eps():
    x = T.Tensor(np.full((1, 2, 3, 3), 5.0, dtype=np.float32))
    out = T.batchnorm2d(x, T.Tensor(np.ones(2, np.float32)), T.Tensor(np.zeros(2, np.float32)),
                        T.BNStats(2), train=True)
    assert np.isfinite(out.data).all()


def test_softmax_uniform_and_rowsums():
    row = T.softmax(T.Tensor(np.full((3, 6), 2.0, dtype=np.float32)), axis=-1)
    np.testing.assert_allclose(row.data, 1.0 / 6.0, atol=1e-7)
    rng = np.random.default_rng(2)
    s = T.softmax(T.Tensor(rng.normal(0, 3, (5, 9))), axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-6)
    assert (s.data >= 0).all()
    with pytest.raises(ValueError):
        T.softmax(T.Tensor(np.zeros((2, 2), np.float32)), axis=5)


def test_cross_entropy_perfect_margin_goes_to_zero():
    losses = []
    for margin in (5.0, 20.0, 60.0):
        logits = np.zeros((4, 12), dtype=np.float64)
        labels = np.array([0, 3, 7, 11])
        logits[np.arange(4), labels] = margin
        losses.append(T.cross_entropy(T.Tensor(logits), labels).item())
    assert losses[0] > losses[1] > losses[2]
    assert losses[2] < 1e-10


def test_cross_entropy_label_range_checked():
    with pytest.raises(ValueError):
        T.cross_entropy(T.Tensor(np.zeros((2, 3), np.float32)), np.array([0, 3]))


def test_backward_requires_scalar_and_accumulates():
    x = T.Tensor(np.arange(4.0, dtype=np.float32), requires_grad=True)
    with pytest.raises(ValueError):
        T.mul(x, 2.0).backward()
    loss = T.tsum(x)
    loss.backward()
    np.testing.assert_array_equal(x.grad, np.ones(4, np.float32))
    T.tsum(x).backward()  # second pass accumulates
    np.testing.assert_array_equal(x.grad, 2 * np.ones(4, np.float32))


def test_sum_xx_grad_is_2x():
    x = T.Tensor(np.array([1.0, -2.0, 0.5], dtype=np.float32), requires_grad=True)
    T.tsum(T.mul(x, x)).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-6)


def test_nonfinite_is_hard_error():
    with pytest.raises(T.NonFiniteError):
        T.Tensor(np.array([1.0, np.nan]))
    big = T.Tensor(np.array([1e38], dtype=np.float32))
    with np.errstate(over="ignore"), pytest.raises(T.NonFiniteError):
        T.mul(big, big)


def test_determinism_bit_identical():
    rng = np.random.default_rng(8)
    x = rng.normal(0, 1, (2, 3, 6, 6)).astype(np.float32)
    w = rng.normal(0, 1, (4, 3, 3, 3)).astype(np.float32)
    a = T.conv2d(T.Tensor(x), T.Tensor(w), 1, 1).data
    b = T.conv2d(T.Tensor(x), T.Tensor(w), 1, 1).data
    assert np.array_equal(a, b)


# -- gradient checks ----------------------------------------------------------


def test_grad_conv2d():
    rng = np.random.default_rng(21)
    x = t64(rng.uniform(-1, 1, (2, 2, 5, 4)))
    w = t64(rng.uniform(-1, 1, (3, 2, 3, 3)))
    probe = T.Tensor(rng.uniform(-1, 1, (2, 3, 5, 4)), dtype=np.float64)
    assert_grads_match(lambda: T.tsum(T.mul(T.conv2d(x, w, 1, 1), probe)), [x, w])
    probe2 = T.Tensor(rng.uniform(-1, 1, (2, 3, 3, 2)), dtype=np.float64)
    assert_grads_match(lambda: T.tsum(T.mul(T.conv2d(x, w, 2, 1), probe2)), [x, w])


def test_grad_pool_linear_matmul_softmax():
    rng = np.random.default_rng(22)
    x = t64(rng.uniform(-1, 1, (2, 2, 4, 4)))
    assert_grads_match(lambda: T.tsum(T.mul(T.avgpool2d(x, 2, 2), T.avgpool2d(x, 2, 2))), [x])
    assert_grads_match(lambda: T.tsum(T.mul(T.global_avg_pool(x), T.global_avg_pool(x))), [x])
    lx, lw, lb = t64(rng.uniform(-1, 1, (3, 4))), t64(rng.uniform(-1, 1, (5, 4))), t64(rng.uniform(-1, 1, 5))
    probe = T.Tensor(rng.uniform(-1, 1, (3, 5)), dtype=np.float64)
    assert_grads_match(lambda: T.tsum(T.mul(T.linear(lx, lw, lb), probe)), [lx, lw, lb])
    a, b = t64(rng.uniform(-1, 1, (3, 4))), t64(rng.uniform(-1, 1, (4, 5)))
    assert_grads_match(lambda: T.tsum(T.mul(T.softmax(T.matmul(a, b), -1), probe)), [a, b])


def test_grad_batchnorm_train_and_infer():
    rng = np.random.default_rng(23)
    x = t64(rng.uniform(-1, 1, (3, 2, 3, 3)))
    g, b = t64(rng.uniform(0.5, 1.5, 2)), t64(rng.uniform(-0.5, 0.5, 2))
    probe = T.Tensor(rng.uniform(-1, 1, (3, 2, 3, 3)), dtype=np.float64)
    assert_grads_match(
        lambda: T.tsum(T.mul(T.batchnorm2d(x, g, b, T.BNStats(2, np.float64), True), probe)),
        [x, g, b])
    stats = T.BNStats(2, np.float64)
    stats.mean[:] = [0.1, -0.2]
    stats.var[:] = [1.3, 0.7]
    assert_grads_match(
        lambda: T.tsum(T.mul(T.batchnorm2d(x, g, b, stats, False), probe)), [x, g, b])


def test_grad_cross_entropy():
    rng = np.random.default_rng(24)
    logits = t64(rng.uniform(-1, 1, (4, 6)))
    labels = np.array([0, 5, 2, 2])
    assert_grads_match(lambda: T.cross_entropy(logits, labels), [logits])


def test_grad_composite_conv_bn_relu_pool():
    rng = np.random.default_rng(25)
    x = t64(rng.uniform(-1, 1, (2, 2, 6, 6)))
    w = t64(rng.uniform(-1, 1, (3, 2, 3, 3)))
    g, b = t64(rng.uniform(0.5, 1.5, 3)), t64(rng.uniform(-0.3, 0.3, 3))

    def loss():
        y = T.conv2d(x, w, 1, 1)
        y = T.batchnorm2d(y, g, b, T.BNStats(3, np.float64), True)
        y = T.relu(y)
        return T.tsum(T.mul(T.avgpool2d(y, 2, 2), T.avgpool2d(y, 2, 2)))

    assert_grads_match(loss, [x, w, g, b], tol=2e-4)  # relu kinks add a little noise


# -- property tests -----------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 10_000))
def test_softmax_row_stochastic_property(rows, cols, seed):
    rng = np.random.default_rng(seed)
    s = T.softmax(T.Tensor(rng.normal(0, 5, (rows, cols))), axis=-1).data
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_conv_linearity_property(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (1, 2, 5, 5)).astype(np.float64)
    y = rng.uniform(-1, 1, (1, 2, 5, 5)).astype(np.float64)
    w = T.Tensor(rng.uniform(-1, 1, (2, 2, 3, 3)), dtype=np.float64)
    a, b = rng.uniform(-2, 2), rng.uniform(-2, 2)
    lhs = T.conv2d(T.Tensor(a * x + b * y), w, 1, 1).data
    rhs = a * T.conv2d(T.Tensor(x), w, 1, 1).data + b * T.conv2d(T.Tensor(y), w, 1, 1).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)
