"""Finite-difference checks and value examples for every differentiable op."""

import math

import numpy as np
import pytest

from campseg.errors import GraphMissing, IndivisibleChannels, ShapeMismatch
from campseg.nn import Tensor, backward, no_grad
from campseg.nn import tensor as T

from autodiff_utils import fd_gradcheck, leaf



def test_add_broadcast_grad():
    rng = np.random.default_rng(101)
    a, b = leaf(rng, 4, 5), leaf(rng, 5)
    fd_gradcheck(lambda: T.add(a, b), [a, b])


def test_sub_mul_grad():
    rng = np.random.default_rng(102)
    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    fd_gradcheck(lambda: T.mul(T.sub(a, b), a), [a, b])


def test_div_grad():
    rng = np.random.default_rng(103)
    a = leaf(rng, 6, 3)
    b = Tensor((rng.random((6, 3)) + 1.0).astype(np.float32), requires_grad=True)
    fd_gradcheck(lambda: T.div(a, b), [a, b])


def test_matmul_2d_grad():
    rng = np.random.default_rng(104)
    a, b = leaf(rng, 7, 4, scale=0.5), leaf(rng, 4, 6, scale=0.5)
    fd_gradcheck(lambda: T.matmul(a, b), [a, b])


def test_matmul_batched_grad():
    rng = np.random.default_rng(105)
    a, b = leaf(rng, 2, 3, 5, 4, scale=0.5), leaf(rng, 2, 3, 4, 6, scale=0.5)
    fd_gradcheck(lambda: T.matmul(a, b), [a, b])


def test_matmul_shape_error():
    rng = np.random.default_rng(106)
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_reshape_transpose_grad():
    rng = np.random.default_rng(107)
    a = leaf(rng, 4, 6)
    fd_gradcheck(lambda: T.transpose(T.reshape(a, (2, 2, 6)), (2, 0, 1)), [a])


def test_narrow_grad():
    rng = np.random.default_rng(108)
    a = leaf(rng, 6, 8)
    fd_gradcheck(lambda: a[1:4, ::2], [a])


def test_pad_grad():
    rng = np.random.default_rng(109)
    a = leaf(rng, 2, 3, 4, 4)
    fd_gradcheck(lambda: T.pad2d(a, 2), [a])
    b = leaf(rng, 5, 3)
    fd_gradcheck(lambda: T.pad_to(b, 0, 9), [b])


def test_concat_grad():
    rng = np.random.default_rng(110)
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 5)
    fd_gradcheck(lambda: T.concat([a, b], axis=1), [a, b])


def test_sum_mean_grad():
    rng = np.random.default_rng(111)
    a = leaf(rng, 5, 7)
    fd_gradcheck(lambda: T.reduce_sum(a, axis=1), [a])
    fd_gradcheck(lambda: T.reduce_mean(a, axis=0, keepdims=True), [a])
    fd_gradcheck(lambda: T.reduce_mean(a), [a])


def test_relu_grad_away_from_kink():
    rng = np.random.default_rng(112)
    vals = rng.standard_normal((6, 6)).astype(np.float32)
    vals[np.abs(vals) < 0.05] = 0.5
    a = Tensor(vals, requires_grad=True)
    fd_gradcheck(lambda: T.relu(a), [a])


def test_gelu_grad():
    rng = np.random.default_rng(113)
    a = leaf(rng, 8, 8)
    fd_gradcheck(lambda: T.gelu(a), [a])


def test_gelu_values():
    rng = np.random.default_rng(114)
    x = Tensor(np.array([0.0, 1.0, 5.0, -1.0], dtype=np.float32))
    y = T.gelu(x).values
    assert y[0] == 0.0
    assert abs(y[1] - 0.841345) < 1e-5          # Phi(1) = 0.8413447
    assert abs(y[2] - 5.0) < 1e-5               # Phi(5) ~ 1 - 2.87e-7
    assert abs(y[3] - (-0.158655)) < 1e-5


def test_sigmoid_grad_and_values():
    rng = np.random.default_rng(115)
    a = leaf(rng, 5, 5, scale=2.0)
    fd_gradcheck(lambda: T.sigmoid(a), [a])
    y = T.sigmoid(Tensor(np.array([0.0, 50.0, -50.0], dtype=np.float32))).values
    assert y[0] == 0.5 and y[1] == pytest.approx(1.0) and y[2] == pytest.approx(0.0)


def test_softmax_grad_and_rows():
    rng = np.random.default_rng(116)
    a = leaf(rng, 6, 9, scale=2.0)
    fd_gradcheck(lambda: T.softmax(a, axis=-1), [a])
    rows = T.softmax(a, axis=-1).values.sum(axis=-1)
    np.testing.assert_allclose(rows, 1.0, atol=1e-6)


def test_layer_norm_grad_and_moments():
    rng = np.random.default_rng(117)
    x = leaf(rng, 10, 16, scale=3.0)
    g = Tensor((rng.random(16) + 0.5).astype(np.float32), requires_grad=True)
    b = leaf(rng, 16)
    fd_gradcheck(lambda: T.layer_norm(x, g, b), [x, g, b])
    ones = Tensor(np.ones(16, np.float32))
    zeros = Tensor(np.zeros(16, np.float32))
    y = T.layer_norm(x, ones, zeros).values
    assert np.abs(y.mean(axis=-1)).max() <= 1e-6
    assert np.abs(y.var(axis=-1) - 1.0).max() <= 1e-4


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (8, 0)])
def test_conv2d_grad(stride, padding):
    rng = np.random.default_rng(118)
    k = 3 if stride != 8 else 8
    size = 8 if stride != 8 else 16
    x = leaf(rng, 2, 3, size, size, scale=0.5)
    w = leaf(rng, 4, 3, k, k, scale=0.3)
    b = leaf(rng, 4)
    fd_gradcheck(lambda: T.conv2d(x, w, b, stride=stride, padding=padding), [x, w, b])


def test_conv_transpose2d_grad():
    rng = np.random.default_rng(119)
    x = leaf(rng, 2, 4, 5, 5, scale=0.5)
    w = leaf(rng, 4, 3, 2, 2, scale=0.3)
    b = leaf(rng, 3)
    out = T.conv_transpose2d(x, w, b, stride=2)
    assert out.shape == (2, 3, 10, 10)
    fd_gradcheck(lambda: T.conv_transpose2d(x, w, b, stride=2), [x, w, b])


def test_max_pool2d_grad():
    rng = np.random.default_rng(120)
    vals = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    # separate window entries so the argmax is FD-stable
    vals += np.arange(vals.size).reshape(vals.shape) * 1e-2
    x = Tensor(vals, requires_grad=True)
    out = T.max_pool2d(x)
    assert out.shape == (2, 3, 4, 4)
    fd_gradcheck(lambda: T.max_pool2d(x), [x])


def test_pixel_shuffle_law_and_grad():
    rng = np.random.default_rng(121)
    x = Tensor(np.array([[[[1.0]], [[2.0]], [[3.0]], [[4.0]]]], dtype=np.float32))
    out = T.pixel_shuffle(x, 2)
    np.testing.assert_array_equal(out.values[0, 0], [[1, 2], [3, 4]])
    a = leaf(rng, 2, 8, 3, 3)
    fd_gradcheck(lambda: T.pixel_shuffle(a, 2), [a])


def test_pixel_shuffle_identity_and_inverse():
    rng = np.random.default_rng(122)
    a = Tensor(rng.standard_normal((1, 12, 4, 4)).astype(np.float32))
    assert T.pixel_shuffle(a, 1) is a
    out = T.pixel_shuffle(a, 2)
    # inverse index map restores the input
    v = out.values.reshape(1, 3, 4, 2, 4, 2).transpose(0, 1, 3, 5, 2, 4).reshape(1, 12, 4, 4)
    np.testing.assert_array_equal(v, a.values)


def test_pixel_shuffle_indivisible():
    rng = np.random.default_rng(123)
    with pytest.raises(IndivisibleChannels):
        T.pixel_shuffle(Tensor(np.zeros((1, 6, 2, 2), np.float32)), 2)


def test_bce_values_and_grad():
    rng = np.random.default_rng(124)
    logits = Tensor(np.zeros((4, 4), np.float32), requires_grad=True)
    target = Tensor((rng.random((4, 4)) > 0.5).astype(np.float32))
    loss = T.bce_with_logits(logits, target)
    assert abs(loss.item() - math.log(2.0)) < 1e-6
    a = leaf(rng, 5, 5, scale=2.0)
    fd_gradcheck(lambda: T.bce_with_logits(a, target2), [a])


target2 = Tensor((np.random.default_rng(1).random((5, 5)) > 0.4).astype(np.float32))


def test_l1_grad():
    rng = np.random.default_rng(125)
    a = leaf(rng, 6, 6)
    tgt = Tensor(rng.standard_normal((6, 6)).astype(np.float32))
    # keep |pred - target| away from the kink
    a.values += np.sign(a.values - tgt.values) * 0.1
    fd_gradcheck(lambda: T.l1_loss(a, tgt), [a])


def test_loss_bce_soft_iou_grad_and_oracle():
    rng = np.random.default_rng(126)
    rng = np.random.default_rng(2)
    logits = Tensor(rng.standard_normal((7, 7)).astype(np.float32) * 2, requires_grad=True)
    target = Tensor((rng.random((7, 7)) > 0.5).astype(np.float32))
    fd_gradcheck(lambda: T.loss_bce_soft_iou(logits, target, 0.7), [logits])

    # independent scalar-loop oracle
    x = logits.values.astype(np.float64)
    t = target.values.astype(np.float64)
    bce = inter = psum = tsum = 0.0
    for i in range(7):
        for j in range(7):
            p = 1.0 / (1.0 + math.exp(-x[i, j]))
            bce += -(t[i, j] * math.log(p) + (1 - t[i, j]) * math.log(1 - p))
            inter += p * t[i, j]
            psum += p
            tsum += t[i, j]
    bce /= 49.0
    soft_iou = inter / (psum + tsum - inter + 1e-6)
    want = bce + 0.7 * (1.0 - soft_iou)
    got = T.loss_bce_soft_iou(logits, target, 0.7).item()
    assert abs(got - want) < 1e-6


def test_loss_perfect_prediction_limit():
    rng = np.random.default_rng(127)
    target = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32))
    logits = Tensor((target.values * 2 - 1) * 60.0)
    loss = T.loss_bce_soft_iou(logits, target, 1.0)
    assert loss.item() < 1e-5


def test_linear_grad_is_input():
    rng = np.random.default_rng(128)
    x = Tensor(np.array([1.5, -2.0, 3.0], dtype=np.float32))
    w = Tensor(np.array([0.5, 0.25, -1.0], dtype=np.float32), requires_grad=True)
    loss = T.reduce_sum(T.mul(w, x))
    backward(loss)
    np.testing.assert_allclose(w.grad, x.values, atol=0)


def test_backward_requires_graph():
    rng = np.random.default_rng(129)
    with pytest.raises(GraphMissing):
        backward(Tensor(np.float32(1.0)))


def test_backward_requires_scalar():
    rng = np.random.default_rng(130)
    a = leaf(rng, 2, 2)
    with pytest.raises(ShapeMismatch):
        backward(T.mul(a, a))


def test_no_grad_blocks_graph():
    rng = np.random.default_rng(131)
    a = leaf(rng, 2, 2)
    with no_grad():
        out = T.mul(a, a)
    assert out._parents == ()


def test_grad_accumulates_across_backward_calls():
    rng = np.random.default_rng(132)
    a = Tensor(np.array([2.0], dtype=np.float32), requires_grad=True)
    for _ in range(2):
        backward(T.reduce_sum(T.mul(a, a)))
    np.testing.assert_allclose(a.grad, [8.0])


def test_frozen_leaf_gets_no_grad():
    rng = np.random.default_rng(133)
    frozen = Tensor(np.array([3.0], dtype=np.float32), requires_grad=False)
    live = Tensor(np.array([4.0], dtype=np.float32), requires_grad=True)
    backward(T.reduce_sum(T.mul(frozen, live)))
    assert frozen.grad is None
    np.testing.assert_allclose(live.grad, [3.0])
