import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from delta6.seqnet import autodiff as ad
from delta6.seqnet.autodiff import Tensor, gradcheck

TOL = 1e-6


def T(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0, scale, shape))


@given(hnp.arrays(float, (3, 4), elements=st.floats(-10, 10)))
def test_sum_of_squares(x):
    t = Tensor(x, requires_grad=True)
    ad.sum(t * t).backward()
    assert np.allclose(t.grad, 2 * x)


@given(hnp.arrays(float, (5, 7), elements=st.floats(-50, 50)))
def test_softmax_rows(x):
    s = ad.softmax(Tensor(x)).data
    assert np.allclose(s.sum(axis=-1), 1, atol=1e-12) and np.all(s >= 0)


@pytest.mark.parametrize("name,fn,shapes", [
    ("matmul", lambda a: ad.sum(ad.tanh(ad.matmul(a[0], a[1]))), [(3, 4), (4, 2)]),
    ("batched_matmul", lambda a: ad.sum(ad.sigmoid(a[0] @ a[1])), [(2, 3, 4), (2, 4, 5)]),
    ("broadcast_add_mul", lambda a: ad.sum(ad.tanh(a[0] * a[1] + a[2])), [(4, 3), (3,), (1, 3)]),
    ("sub_neg", lambda a: ad.sum(ad.sigmoid(-(a[0] - a[1]))), [(3, 3), (3, 3)]),
    ("relu", lambda a: ad.sum(ad.relu(a[0]) * a[1]), [(4, 5), (4, 5)]),
    ("gelu", lambda a: ad.sum(ad.gelu(a[0]) * a[1]), [(4, 5), (4, 5)]),
    ("softmax", lambda a: ad.sum(ad.softmax(a[0], -1) * a[1]), [(3, 6), (3, 6)]),
    ("layer_norm", lambda a: ad.sum(ad.tanh(ad.layer_norm(a[0], a[1], a[2]))), [(4, 6), (6,), (6,)]),
    ("slice_concat", lambda a: ad.sum(ad.tanh(ad.concat([a[0][:, 1:], a[1]], axis=1))), [(3, 4), (3, 2)]),
    ("reshape_transpose", lambda a: ad.sum(ad.sigmoid(ad.transpose(ad.reshape(a[0], (2, 3, 2)), (0, 2, 1)))
                                           * a[1]), [(3, 4), (2, 2, 3)]),
    ("mean_mse", lambda a: ad.mse_loss(ad.tanh(a[0]) * a[1], np.full((5, 3), 0.3)), [(5, 3), (5, 3)]),
])
def test_op_gradcheck(name, fn, shapes, rng):
    inputs = [T(rng, *s) for s in shapes]
    if name == "relu":
        # keep away from the kink
        inputs[0].data += np.sign(inputs[0].data) * 0.1
    assert gradcheck(fn, inputs) < TOL


def test_gru_sequence_grad(rng):
    d, i = 5, 3
    ins = [T(rng, 2, 4, i), T(rng, i, 3 * d, scale=0.5), T(rng, d, 3 * d, scale=0.5),
           T(rng, 3 * d, scale=0.1), T(rng, 3 * d, scale=0.1)]
    assert gradcheck(lambda a: ad.sum(ad.tanh(ad.gru_sequence(*a))), ins) < TOL


def test_lstm_sequence_grad(rng):
    d, i = 4, 3
    ins = [T(rng, 2, 4, i), T(rng, i, 4 * d, scale=0.5), T(rng, d, 4 * d, scale=0.5),
           T(rng, 4 * d, scale=0.1), T(rng, 4 * d, scale=0.1)]
    assert gradcheck(lambda a: ad.sum(ad.sigmoid(ad.lstm_sequence(*a))), ins) < TOL


def test_random_graph(rng):
    ins = [T(rng, 4, 3), T(rng, 3, 3), T(rng, 3)]

    def f(a):
        h = ad.tanh(a[0] @ a[1] + a[2])
        g = ad.softmax(h @ ad.transpose(h, (1, 0)))
        return ad.mean(ad.relu(g @ h + 0.05) * h)
    assert gradcheck(f, ins) < TOL


def test_gradient_accumulates_over_reuse(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    ad.sum(x * x + x).backward()
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4, 3)))
    with pytest.raises((ad.ShapeError, ValueError)):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_nan_guard():
    x = Tensor(np.array([1.0, np.nan]), requires_grad=True)
    with pytest.raises(ad.NonFiniteError):
        ad.sum(x * x).backward()


def test_dropout(rng):
    x = Tensor(np.ones((200, 50)))
    assert ad.dropout(x, 0.3, rng, training=False) is x or np.array_equal(
        ad.dropout(x, 0.3, rng, training=False).data, x.data)
    y = ad.dropout(x, 0.3, rng, training=True).data
    kept = y != 0
    assert abs(kept.mean() - 0.7) < 0.02
    assert np.allclose(y[kept], 1 / 0.7)


def test_no_grad_builds_no_graph(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    with ad.no_grad():
        y = ad.sum(x * x)
    assert not y.requires_grad
