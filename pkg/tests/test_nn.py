import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fd import central_diff, rel_err
from snelfs.data import BINARY, MULTICLASS, REGRESSION, Task
from snelfs.linalg import ShapeError
from snelfs.nn import (AdamState, Architecture, MlpParams, adam_step, backward, forward, init_params, loss,
                       reg_penalty)


def zero_net(arch):
    p = init_params(arch, 0)
    return MlpParams([np.zeros_like(w) for w in p.weights], [np.zeros_like(b) for b in p.biases], p.output)


class TestArchitecture:
    def test_for_task(self):
        assert Architecture.for_task(Task(MULTICLASS, 4), 15, (5,)).sizes == [15, 5, 4]
        assert Architecture.for_task(Task(REGRESSION), 3).output == "linear"

    def test_validation(self):
        with pytest.raises(ValueError):
            Architecture(0, ())
        with pytest.raises(ValueError):
            Architecture(3, (), "softmax", 1)
        with pytest.raises(ValueError):
            Architecture(3, (), l1=-1)


class TestInit:
    def test_zero_biases_and_limits(self):
        arch = Architecture(6, (4, 3))
        p = init_params(arch, 1)
        assert all(not b.any() for b in p.biases)
        for w, (fi, fo) in zip(p.weights, [(6, 4), (4, 3), (3, 1)]):
            assert w.shape == (fi, fo)
            assert np.abs(w).max() <= np.sqrt(6 / (fi + fo))

    def test_deterministic(self):
        a, b = init_params(Architecture(5, (3,)), 9), init_params(Architecture(5, (3,)), 9)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_mean_near_zero(self):
        w = init_params(Architecture(100, (100,)), 0).weights[0]
        sigma = np.sqrt(6 / 200) / np.sqrt(3)
        assert abs(w.mean()) < 3 * sigma / 100


class TestForward:
    def test_zero_net_sigmoid_is_half(self):
        out, _ = forward(zero_net(Architecture(3, (2,))), np.ones((4, 3)))
        np.testing.assert_array_equal(out, 0.5)

    def test_linear_single_layer_is_affine(self):
        w = np.array([[2.0], [-1.0]])
        p = MlpParams([w], [np.array([0.5])], "linear")
        x = np.array([[1.0, 3.0], [0.0, 0.0]])
        np.testing.assert_array_equal(forward(p, x)[0], x @ w + 0.5)

    def test_softmax_rows(self, rng):
        p = init_params(Architecture(4, (5,), "softmax", 3), 2)
        out, _ = forward(p, rng.standard_normal((20, 4)) * 5)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        assert ((out > 0) & (out < 1)).all()

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            forward(init_params(Architecture(3, ()), 0), np.ones((2, 4)))


class TestLoss:
    def test_values(self):
        assert loss(np.array([[1.0]]), np.array([1.0]), BINARY) <= 1e-7 * (1 + 1e-6)  # -ln(1 - 1e-7)
        assert loss(np.array([[0.5], [0.5]]), np.array([0.0, 1.0]), BINARY) == pytest.approx(np.log(2))
        assert loss(np.array([[3.0]]), np.array([3.0]), REGRESSION) == 0.0
        assert loss(np.array([[0.2, 0.8]]), np.array([1]), MULTICLASS) == pytest.approx(-np.log(0.8))
        with pytest.raises(ValueError):
            loss(np.zeros((1, 1)), np.zeros(1), "hinge")

    @given(st.integers(0, 1000))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        out = rng.uniform(0, 1, (15, 1))
        y = rng.integers(0, 2, 15).astype(float)
        perm = rng.permutation(15)
        assert abs(loss(out, y, BINARY) - loss(out[perm], y[perm], BINARY)) < 1e-12


def _fd_check(arch, x, y, l1, l2, seed):
    p = init_params(arch, seed)
    for b in p.biases:
        b += np.random.default_rng(seed).normal(0, 0.1, b.shape)
    out, cache = forward(p, x)
    g = backward(p, cache, y, l1, l2)
    # keep away from kinks: no pre-activation or weight within 1e-8 of zero
    assert min(np.abs(z).min() for z in cache.pre) > 1e-8
    assert min(np.abs(w).min() for w in p.weights) > 1e-8

    def f():
        return loss(forward(p, x)[0], y, p.output) + reg_penalty(p, l1, l2)

    xx = x.copy()

    def fx():
        return loss(forward(p, xx)[0], y, p.output) + reg_penalty(p, l1, l2)

    num = central_diff(f, p.arrays())
    for a, n in zip(g.weights + g.biases, num):
        assert rel_err(a, n) < 1e-5
    assert rel_err(g.inputs, central_diff(fx, [xx])[0]) < 1e-5


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("output,n_out", [("sigmoid", 1), ("softmax", 3), ("linear", 1)])
def test_backward_matches_finite_differences(seed, output, n_out):
    rng = np.random.default_rng(100 + seed)
    x = rng.standard_normal((8, 4))
    y = rng.integers(0, n_out if n_out > 1 else 2, 8).astype(float) if output != "linear" else rng.standard_normal(8)
    _fd_check(Architecture(4, (3,), output, n_out), x, y, 0.01, 0.02, seed)


def test_gradient_zero_at_perfect_fit():
    p = MlpParams([np.array([[2.0]])], [np.array([1.0])], "linear")
    x = np.array([[0.0], [1.0], [2.0]])
    out, cache = forward(p, x)
    g = backward(p, cache, out[:, 0])
    assert np.abs(g.weights[0]).max() < 1e-10 and np.abs(g.biases[0]).max() < 1e-10


def test_l2_only_gradient():
    p = MlpParams([np.array([[2.0], [-3.0]])], [np.array([0.0])], "linear")
    x = np.zeros((2, 2))
    out, cache = forward(p, x)
    g = backward(p, cache, out[:, 0], l2=0.1)
    np.testing.assert_array_equal(g.weights[0], 2 * 0.1 * p.weights[0])


class TestAdam:
    def test_first_step(self):
        st_ = AdamState(lr=1e-3)
        (p,) = adam_step(st_, [np.array([0.0])], [np.array([1.0])])
        # closed form: m_hat = 1, v_hat = 1, step = lr / (1 + eps)
        assert p[0] == pytest.approx(-9.99999e-4, rel=1e-6)
        assert st_.step == 1

    def test_zero_gradient(self):
        p0 = np.array([1.5, -2.0])
        (p,) = adam_step(AdamState(), [p0], [np.zeros(2)])
        np.testing.assert_array_equal(p, p0)

    def test_odd_symmetry(self):
        g = np.array([0.3, -2.0])
        (a,) = adam_step(AdamState(), [np.zeros(2)], [g])
        (b,) = adam_step(AdamState(), [np.zeros(2)], [-g])
        np.testing.assert_array_equal(a, -b)

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            adam_step(AdamState(), [np.zeros(2)], [np.zeros(3)])
        with pytest.raises(ShapeError):
            adam_step(AdamState(), [np.zeros(2)], [])

    def test_matches_reference_recursion(self):
        # two steps of the textbook update written out directly
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        g1, g2 = 0.5, -1.5
        m1, v1 = (1 - b1) * g1, (1 - b2) * g1**2
        p1 = -lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
        m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2**2
        p2 = p1 - lr * (m2 / (1 - b1**2)) / (np.sqrt(v2 / (1 - b2**2)) + eps)
        st_ = AdamState(lr=lr)
        (p,) = adam_step(st_, [np.array([0.0])], [np.array([g1])])
        (p,) = adam_step(st_, [p], [np.array([g2])])
        assert p[0] == pytest.approx(p2, rel=1e-12)
