import math
import zlib

import numpy as np
import pytest

from hierrank import diffcore as dc
from conftest import check_op


def triple_loop_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_hand_example(self):
        out = dc.matmul(dc.tensor([[1.0, 2.0], [3.0, 4.0]]), dc.tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_identity(self, rng):
        x = rng.standard_normal((4, 3))
        np.testing.assert_array_equal(dc.matmul(dc.tensor(np.eye(4)), dc.tensor(x)).data, x)

    def test_matches_triple_loop(self, rng):
        for _ in range(10):
            a, b = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
            got = dc.matmul(dc.tensor(a), dc.tensor(b)).data
            np.testing.assert_allclose(got, triple_loop_matmul(a, b), rtol=0, atol=1e-12)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            dc.matmul(dc.tensor(np.ones((2, 3))), dc.tensor(np.ones((2, 3))))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(dc.softmax(dc.tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])

    def test_hand_value(self):
        e = math.e
        np.testing.assert_allclose(dc.softmax(dc.tensor([[1.0, 0.0]])).data,
                                   [[e / (e + 1), 1 / (e + 1)]], rtol=1e-12)
        np.testing.assert_allclose(dc.softmax(dc.tensor([[1.0, 0.0]])).data,
                                   [[0.73106, 0.26894]], atol=1e-5)

    def test_shift_invariance(self, rng):
        x = rng.standard_normal((4, 6))
        np.testing.assert_allclose(dc.softmax(dc.tensor(x + 17.3)).data,
                                   dc.softmax(dc.tensor(x)).data, atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        x = rng.standard_normal((50, 9)) * 30
        np.testing.assert_allclose(dc.softmax(dc.tensor(x)).data.sum(-1), 1.0, atol=1e-6)

    def test_masked_entries_are_zero(self):
        out = dc.softmax(dc.tensor([[1.0, 5.0, 2.0]]), mask=np.array([[True, False, True]]))
        assert out.data[0, 1] == 0.0
        np.testing.assert_allclose(out.data.sum(), 1.0)

    def test_gradient_matches_closed_form(self, rng):
        for _ in range(100):
            x, w = rng.standard_normal((3, 5)), rng.standard_normal((3, 5))
            p = dc.parameter(x)
            dc.sum(dc.mul(dc.softmax(p), w)).backward()
            s = np.exp(x) / np.exp(x).sum(-1, keepdims=True)
            np.testing.assert_allclose(p.grad, s * (w - (s * w).sum(-1, keepdims=True)), rtol=1e-10, atol=1e-15)

    def test_fully_masked_row_raises(self):
        with pytest.raises(ValueError, match="fully masked"):
            dc.softmax(dc.tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


class TestBackward:
    def test_dot_with_itself(self):
        x = dc.parameter([1.0, 2.0])
        dc.sum(x * x).backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_sigmoid_derivative_at_zero(self):
        z = dc.parameter(0.0)
        dc.sigmoid(z).backward()
        assert z.grad == pytest.approx(0.25)

    def test_non_scalar_root_raises(self):
        x = dc.parameter([1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_repeated_backward_accumulates(self):
        x = dc.parameter([1.0, 2.0])
        dc.sum(x * x).backward()
        dc.sum(x * x).backward()
        np.testing.assert_allclose(x.grad, [4.0, 8.0])

    def test_shared_subexpression_counted_once_per_path(self):
        x = dc.parameter(3.0)
        y = x * x          # used twice below
        (y + y).backward()
        assert x.grad == pytest.approx(12.0)

    def test_random_composite_graph(self, rng):
        """Every op kind in one graph vs central differences (double precision)."""
        def build(E, W, b, V):
            h = dc.sigmoid(E @ W + b) * dc.tanh(E @ V)
            att = dc.softmax(h @ dc.swapaxes(h), mask=np.ones((4, 4), bool))
            c = dc.concat([att @ h, h], axis=-1)
            pooled = dc.max_over_time(dc.unfold(c, 2))
            logits = dc.reshape(dc.relu(pooled), (1, -1))
            lp = dc.log_softmax(logits)
            picked = dc.take(dc.reshape(lp, (-1,)), np.array([0, 3, 3]))
            return dc.mean(picked) + dc.log(dc.sigmoid(dc.sum(pooled)), eps=1e-12)

        for _ in range(5):
            err = check_op(build, (4, 3), (3, 5), (5,), (3, 5), rng=rng)
            assert err < 1e-6


OP_CASES = {
    "matmul": (lambda a, b: a @ b, [(3, 4), (4, 2)]),
    "batched_matmul": (lambda a, b: a @ b, [(2, 3, 4), (4, 2)]),
    "add_broadcast": (lambda a, b: a + b, [(3, 4), (4,)]),
    "sub": (lambda a, b: a - b, [(3, 4), (3, 4)]),
    "mul_broadcast": (lambda a, b: a * b, [(2, 3, 4), (3, 1)]),
    "sigmoid": (dc.sigmoid, [(3, 4)]),
    "tanh": (dc.tanh, [(3, 4)]),
    "softmax": (lambda x: dc.softmax(x, axis=-1), [(3, 5)]),
    "softmax_axis0": (lambda x: dc.softmax(x, axis=0), [(3, 5)]),
    "log_softmax": (dc.log_softmax, [(2, 5)]),
    "concat": (lambda a, b: dc.concat([a, b], axis=-1), [(3, 2), (3, 4)]),
    "swapaxes": (dc.swapaxes, [(2, 3, 4)]),
    "reshape": (lambda x: dc.reshape(x, (4, 3)), [(3, 4)]),
    "unfold": (lambda x: dc.unfold(x, 3), [(2, 5, 3)]),
    "max_over_time": (dc.max_over_time, [(2, 6, 3)]),
    "take": (lambda x: dc.take(x, [2, 0, 2], axis=0), [(4, 3)]),
    "sum_axis": (lambda x: dc.sum(x, axis=1), [(3, 4)]),
    "mean": (dc.mean, [(3, 4)]),
    "scale": (lambda x: dc.scale(x, -2.5), [(3,)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_100_trials(name):
    build, shapes = OP_CASES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = max(check_op(build, *shapes, rng=rng) for _ in range(100))
    assert worst < 1e-6


def test_log_gradient_positive_inputs():
    rng = np.random.default_rng(5)
    worst = max(check_op(dc.log, (3, 4), rng=rng, positive=True) for _ in range(100))
    assert worst < 1e-6


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        worst = max(worst, check_op(lambda x: dc.relu(x * x - 0.25), (3, 4), rng=rng))
    assert worst < 1e-4  # finite differences straddle the kink on rare draws


class TestMaxOverTime:
    def test_gradient_only_to_argmax(self):
        x = dc.parameter([[1.0, 5.0], [3.0, 2.0], [0.0, 5.0]])
        dc.sum(dc.max_over_time(x)).backward()
        # column 1 ties between rows 0 and 2: lowest index wins
        np.testing.assert_array_equal(x.grad, [[0, 1], [1, 0], [0, 0]])

    def test_mask_excludes_positions(self):
        x = dc.parameter([[1.0], [9.0], [2.0]])
        out = dc.max_over_time(x, mask=np.array([True, False, True]))
        assert out.data[0] == 2.0
        dc.sum(out).backward()
        np.testing.assert_array_equal(x.grad, [[0], [0], [1]])


class TestAdam:
    def test_zero_grad_is_null_update(self):
        p = dc.parameter([1.0, -2.0])
        p.grad = np.zeros(2)
        st = dc.AdamState.for_param(p, lr=0.1)
        dc.adam_step(p, st)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert st.step == 1

    def test_first_step_closed_form(self):
        g = np.array([0.3, -2.0, 1e-3])
        p = dc.parameter(np.zeros(3))
        p.grad = g.copy()
        st = dc.AdamState.for_param(p, lr=0.01)
        dc.adam_step(p, st)
        # m_hat = g, v_hat = g^2 after bias correction
        np.testing.assert_allclose(p.data, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
        np.testing.assert_array_equal(p.grad, g)

    def test_quadratic_converges(self):
        x = dc.parameter(0.0)
        st = dc.AdamState.for_param(x, lr=0.1)
        for _ in range(500):
            x.grad = None
            ((x - 3.0) * (x - 3.0)).backward()
            dc.adam_step(x, st)
        assert abs(float(x.data) - 3.0) < 1e-3
        assert st.step == 500

    def test_missing_grad_raises(self):
        p = dc.parameter([1.0])
        with pytest.raises(ValueError, match="no grad"):
            dc.adam_step(p, dc.AdamState.for_param(p, lr=0.1))


def test_forward_is_deterministic(rng):
    a = rng.standard_normal((5, 4)).astype(np.float32)
    b = rng.standard_normal((4, 3)).astype(np.float32)

    def run():
        return dc.softmax(dc.tanh(dc.tensor(a) @ dc.tensor(b))).data

    assert run().tobytes() == run().tobytes()


def test_no_grad_builds_no_graph():
    x = dc.parameter([1.0])
    with dc.no_grad():
        y = x * x
    assert not y.requires_grad
    assert (x * x).requires_grad
