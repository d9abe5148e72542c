import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anypose import mlp
from oracles import central_fd, max_rel_err, naive_mlp

widths = st.lists(st.integers(1, 8), min_size=2, max_size=5)


def test_init_deterministic():
    a = mlp.init([66, 128, 128, 66], 3)
    b = mlp.init([66, 128, 128, 66], 3)
    for x, y in zip(a.arrays(), b.arrays()):
        assert x.tobytes() == y.tobytes()
    assert mlp.init([66, 128, 128, 66], 4).weights[0].tobytes() != a.weights[0].tobytes()


def test_init_shapes_and_zero_biases():
    p = mlp.init([66, 128, 128, 66], 0)
    assert p.widths == [66, 128, 128, 66]
    assert [w.shape for w in p.weights] == [(128, 66), (128, 128), (66, 128)]
    assert all(not np.any(b) for b in p.biases)


def test_init_glorot_bound():
    p = mlp.init([50, 30], 0)
    assert np.max(np.abs(p.weights[0])) <= np.sqrt(6 / 80)


def test_init_rejects_zero_width():
    with pytest.raises(ValueError):
        mlp.init([3, 0, 3], 0)


def test_params_chain_validated():
    with pytest.raises(ValueError):
        mlp.MlpParams([np.zeros((4, 3)), np.zeros((2, 5))], [np.zeros(4), np.zeros(2)])


def test_zero_params_give_zero_output(rng):
    p = mlp.init([5, 7, 3], 0)
    for a in p.arrays():
        a[...] = 0
    y, _ = mlp.forward(p, rng.normal(size=5))
    assert not np.any(y)


def test_identity_layer(rng):
    p = mlp.MlpParams([np.eye(4)], [np.zeros(4)])
    x = rng.normal(size=4)
    np.testing.assert_array_equal(mlp.forward(p, x)[0], x)


def test_affine_hand_value():
    p = mlp.MlpParams([np.array([[2.0]])], [np.array([3.0])])
    assert mlp.forward(p, np.array([1.0]))[0].tolist() == [5.0]


@given(widths, st.integers(0, 2**32 - 1))
def test_forward_matches_loop_oracle(ws, seed):
    p = mlp.init(ws, seed)
    x = np.random.default_rng(seed).normal(size=ws[0])
    np.testing.assert_allclose(mlp.forward(p, x)[0], naive_mlp(p.weights, p.biases, x), rtol=1e-12, atol=1e-12)


@given(widths, st.integers(0, 2**32 - 1))
def test_forward_pure_and_batch_consistent(ws, seed):
    p = mlp.init(ws, seed)
    X = np.random.default_rng(seed).normal(size=(4, ws[0]))
    y1 = mlp.forward(p, X)[0]
    assert y1.tobytes() == mlp.forward(p, X)[0].tobytes()
    np.testing.assert_array_equal(mlp.apply(p, X), y1)
    for i in range(4):
        np.testing.assert_allclose(mlp.forward(p, X[i])[0], y1[i], rtol=1e-13, atol=1e-13)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        mlp.forward(mlp.init([3, 2], 0), np.zeros(4))


def test_zero_cotangent_zero_grads(rng):
    p = mlp.init([4, 6, 3], 1)
    _, tape = mlp.forward(p, rng.normal(size=4))
    g = mlp.backward(p, tape, np.zeros(3))
    assert all(not np.any(a) for a in g.arrays())
    assert not np.any(g.inputs)


def test_linear_layer_hand_grads(rng):
    W = rng.normal(size=(1, 3))
    p = mlp.MlpParams([W], [np.zeros(1)])
    x = rng.normal(size=3)
    _, tape = mlp.forward(p, x)
    g = mlp.backward(p, tape, np.ones(1))  # loss = y
    np.testing.assert_array_equal(g.biases[0], [1.0])
    np.testing.assert_array_equal(g.weights[0], x[None, :])
    np.testing.assert_array_equal(g.inputs, W[0])


def _fd_check(ws, seed, batch=None):
    r = np.random.default_rng(seed)
    p = mlp.init(ws, seed)
    for b in p.biases:
        b[...] = r.normal(scale=0.1, size=b.shape)
    x = r.normal(size=(batch, ws[0]) if batch else ws[0])
    c = r.normal(size=(batch, ws[-1]) if batch else ws[-1])
    loss = lambda: float(np.sum(c * mlp.apply(p, x)))  # noqa: E731
    _, tape = mlp.forward(p, x)
    g = mlp.backward(p, tape, c)
    num = central_fd(loss, p.arrays() + [x])
    return max_rel_err(g.arrays() + [g.inputs], num)


def test_random_three_layer_fd():
    assert _fd_check([5, 16, 16, 16, 4], 11) < 1e-4


def test_batched_grads_sum_over_batch():
    assert _fd_check([4, 8, 3], 5, batch=6) < 1e-4


@given(widths, st.integers(0, 2**32 - 1))
def test_grad_bundle_shapes(ws, seed):
    p = mlp.init(ws, seed)
    _, tape = mlp.forward(p, np.ones(ws[0]))
    g = mlp.backward(p, tape, np.ones(ws[-1]))
    assert [a.shape for a in g.arrays()] == [a.shape for a in p.arrays()]


def test_grad_bundle_norm_and_add():
    p = mlp.init([2, 2], 0)
    g = mlp.GradBundle.zeros_like(p)
    g.weights[0][...] = 3.0
    g.biases[0][...] = [4.0, 0.0]
    assert g.global_norm() == pytest.approx(np.sqrt(4 * 9 + 16))
    g.add_(mlp.GradBundle([w.copy() for w in g.weights], [b.copy() for b in g.biases]))
    assert g.weights[0][0, 0] == 6.0
