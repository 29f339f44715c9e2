import math

import numpy as np
import pytest

from scenemem.nep import tensor as T
from scenemem.nep.tensor import Tensor
from scenemem.nep.train import bce_loss, class_weights


def numeric_grad(f, arrays, i, h=1e-6):
    base = [a.copy() for a in arrays]
    g = np.zeros_like(base[i])
    for idx in np.ndindex(*base[i].shape):
        plus = [a.copy() for a in base]
        minus = [a.copy() for a in base]
        plus[i][idx] += h
        minus[i][idx] -= h
        g[idx] = (f(*plus) - f(*minus)) / (2 * h)
    return g


def check_op(op, *arrays, seed=0):
    """Compare reverse-mode gradients of sum(op(...) * R) against central differences."""
    out_shape = op(*[Tensor(a) for a in arrays]).shape
    R = np.random.default_rng(seed).normal(size=out_shape)

    def scalar(*xs):
        return float(np.sum(op(*[Tensor(x) for x in xs]).data * R))

    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*ts)
    out.backward(R)
    for i, t in enumerate(ts):
        want = numeric_grad(scalar, arrays, i)
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-7)


rng = np.random.default_rng(42)


def away_from_zero(shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 0.1, 0.5, x)


class TestOpGradients:
    def test_add_broadcast(self):
        check_op(T.add, rng.normal(size=(3, 4)), rng.normal(size=(4,)))

    def test_mul_broadcast(self):
        check_op(T.mul, rng.normal(size=(2, 3, 4)), rng.normal(size=(1, 3, 1)))

    def test_matmul_batched(self):
        check_op(T.matmul, rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5)))
        check_op(T.matmul, rng.normal(size=(2, 2, 3, 4)), rng.normal(size=(2, 2, 4, 3)))

    def test_relu(self):
        check_op(T.relu, away_from_zero((4, 5)))

    def test_sigmoid(self):
        check_op(T.sigmoid, rng.normal(size=(6,)) * 3)

    def test_reshape_transpose(self):
        check_op(lambda x: T.transpose(T.reshape(x, (2, 3, 4)), (2, 0, 1)), rng.normal(size=(6, 4)))

    def test_concat(self):
        check_op(lambda a, b: T.concat([a, b], axis=-1), rng.normal(size=(3, 2)), rng.normal(size=(3, 5)))

    def test_take_rows_repeats_accumulate(self):
        check_op(lambda x: T.take_rows(x, [0, 2, 2, 1, 2]), rng.normal(size=(3, 4)))

    def test_scatter_rows(self):
        check_op(lambda x: T.scatter_rows(x, [4, 0, 2], 6), rng.normal(size=(3, 2)))

    def test_masked_softmax(self):
        mask = np.array([[1, 1, 0, 1], [0, 0, 0, 0], [1, 0, 0, 0]], dtype=bool)
        check_op(lambda x: T.masked_softmax(x, mask), rng.normal(size=(3, 4)))

    def test_layer_norm(self):
        check_op(T.layer_norm, rng.normal(size=(3, 5)), rng.normal(size=(5,)), rng.normal(size=(5,)))

    def test_weighted_bce(self):
        y = np.array([1, 0, 0, 1, 0.0])
        w = class_weights(y.astype(bool))
        check_op(lambda z: T.weighted_bce_with_logits(z, y, w), rng.normal(size=(5,)) * 2)

    def test_sparse_matmul(self):
        rows, cols, vals = [0, 0, 1, 2, 2, 2], [0, 1, 1, 0, 1, 2], [0.5, 0.5, 1.0, 1 / 3, 1 / 3, 1 / 3]
        check_op(lambda x: T.sparse_matmul(rows, cols, vals, x, 3), rng.normal(size=(3, 4)))

    def test_shared_subgraph_accumulates(self):
        check_op(lambda x: T.add(T.mul(x, x), T.sigmoid(x)), rng.normal(size=(4,)))


class TestForwardValues:
    def test_masked_entries_get_zero_weight(self):
        y = T.masked_softmax(Tensor(np.array([[1.0, 50.0, 2.0]])), np.array([[True, False, True]]))
        assert y.data[0, 1] == 0.0
        assert y.data.sum() == pytest.approx(1.0)

    def test_fully_masked_row_is_zero(self):
        y = T.masked_softmax(Tensor(np.ones((1, 3))), np.zeros((1, 3), dtype=bool))
        assert np.all(y.data == 0)

    def test_sigmoid_extremes_finite(self):
        y = T._sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert np.all(np.isfinite(y)) and y[1] == 0.5

    def test_backward_needs_scalar(self):
        with pytest.raises(ValueError):
            T.relu(Tensor(np.ones(3), requires_grad=True)).backward()


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


class TestLoss:
    def test_perfect_predictions(self):
        y = np.array([True, False, True, False, False])
        p = np.where(y, 1 - 1e-7, 1e-7)
        assert bce_loss(p, y) < 1e-5

    def test_half_everywhere(self):
        assert bce_loss([0.5, 0.5], [True, False]) == pytest.approx(math.log(2) * (1 + 1) / 2, abs=1e-12)

    def test_all_true_is_plain_mean(self):
        p = np.array([0.9, 0.6, 0.3])
        assert np.all(class_weights(np.ones(3, dtype=bool)) == 1)
        assert bce_loss(p, np.ones(3, dtype=bool)) == pytest.approx(-np.mean(np.log(p)))

    def test_false_edges_reweighted(self):
        w = class_weights(np.array([True, False, False, False]))
        np.testing.assert_allclose(w, [1, 1 / 3, 1 / 3, 1 / 3])

    def test_fused_logits_match_probability_form(self):
        y = np.array([True, False, True, False, False, True])
        p = np.array([0.9, 0.2, 0.4, 0.7, 1e-9, 1 - 1e-12])
        fused = T.weighted_bce_with_logits(Tensor(logit(np.clip(p, 1e-15, 1 - 1e-15))), y, class_weights(y))
        assert float(fused.data) == pytest.approx(bce_loss(p, y), rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            bce_loss([0.5], [True, False])
