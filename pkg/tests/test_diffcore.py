import math

import numpy as np
import pytest

from tsmoco import diffcore as dc
from tsmoco.diffcore import ContractError, DimensionError


def naive_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = dc.matmul(dc.constant(np.eye(2)), dc.constant(b))
        np.testing.assert_array_equal(out.data, b)

    def test_row_times_column(self):
        out = dc.matmul(dc.constant([[1.0, 2.0]]), dc.constant([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        out = dc.matmul(dc.constant(a), dc.constant(b))
        np.testing.assert_allclose(out.data, naive_matmul(a, b), rtol=0, atol=1e-15)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            dc.matmul(dc.constant(np.ones((2, 3))), dc.constant(np.ones((2, 2))))

    def test_batched_shared_weight_gradient(self):
        rng = np.random.default_rng(1)
        a = dc.parameter(rng.normal(size=(2, 3, 4)))
        b = dc.parameter(rng.normal(size=(4, 5)))
        assert dc.check_gradients(lambda: dc.sum(dc.tanh(a @ b)), [a, b]) < 1e-8


class TestElementwise:
    def test_fixed_points(self):
        assert dc.sigmoid(dc.constant(0.0)).item() == 0.5
        assert dc.tanh(dc.constant(0.0)).item() == 0.0
        assert dc.relu(dc.constant(-3.2)).item() == 0.0
        assert dc.relu(dc.constant(3.2)).item() == 3.2

    def test_sigmoid_is_stable_at_extremes(self):
        out = dc.sigmoid(dc.constant([-1000.0, 1000.0])).data
        assert out.tolist() == [0.0, 1.0]

    def test_binary_shape_mismatch(self):
        with pytest.raises(DimensionError):
            dc.add(dc.constant(np.ones(3)), dc.constant(np.ones(2)))

    def test_scalar_broadcast_only(self):
        out = dc.constant(np.ones((2, 2))) * 3.0
        np.testing.assert_array_equal(out.data, 3.0 * np.ones((2, 2)))
        with pytest.raises(DimensionError):
            dc.mul(dc.constant(np.ones((2, 2))), dc.constant(np.ones(2)))

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh", "relu", "add", "sub", "mul", "scale", "div"])
    def test_dispatch_gradients(self, kind):
        rng = np.random.default_rng(3)
        a = dc.parameter(rng.uniform(0.5, 1.5, size=(3, 2)) * rng.choice([-1, 1], size=(3, 2)))
        b = dc.parameter(rng.uniform(0.5, 1.5, size=(3, 2)))
        other = 0.7 if kind == "scale" else b
        params = [a] if kind in ("sigmoid", "tanh", "relu", "scale") else [a, b]

        def loss():
            return dc.sum(dc.elementwise(kind, a, other) * dc.constant(np.arange(6.0).reshape(3, 2)))

        assert dc.check_gradients(loss, params) < 1e-6


class TestReduce:
    def test_values(self):
        assert dc.mean(dc.constant([1.0, 2.0, 3.0])).item() == 2.0
        assert dc.sum(dc.constant(np.zeros((3, 4)))).item() == 0.0
        np.testing.assert_array_equal(dc.reduce("mean", dc.constant([[1.0, 2.0], [3.0, 4.0]]), 0).data, [2.0, 3.0])

    def test_axis_out_of_range(self):
        with pytest.raises(DimensionError):
            dc.sum(dc.constant(np.ones((2, 2))), axis=2)

    def test_axis_gradient(self):
        w = dc.parameter(np.random.default_rng(0).normal(size=(3, 4)))
        weights = dc.constant(np.arange(3.0))
        assert dc.check_gradients(lambda: dc.sum(dc.mean(w, axis=1) * weights), [w]) < 1e-8


class TestSoftmax:
    def test_closed_forms(self):
        np.testing.assert_allclose(dc.softmax(dc.constant([0.0, 0.0])).data, [0.5, 0.5], atol=0)
        np.testing.assert_allclose(dc.softmax(dc.constant([1000.0, 1000.0])).data, [0.5, 0.5], atol=0)
        np.testing.assert_allclose(dc.softmax(dc.constant([0.0, math.log(3.0)])).data, [0.25, 0.75], atol=1e-15)

    def test_rows_sum_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.normal(scale=5.0, size=(4, 7))
            p = dc.softmax(dc.constant(x), axis=1).data
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
            # an integer shift keeps x - max(x) bit-identical
            shifted = dc.softmax(dc.constant(x + 8.0), axis=1).data
            np.testing.assert_array_equal(p, dc.softmax(dc.constant(x), axis=1).data)
            np.testing.assert_allclose(shifted, p, atol=1e-15)

    def test_log_softmax_matches_log_of_softmax(self):
        x = np.random.default_rng(2).normal(size=(3, 5))
        np.testing.assert_allclose(dc.log_softmax(dc.constant(x)).data,
                                   np.log(dc.softmax(dc.constant(x)).data), atol=1e-14)


class TestLayerNorm:
    def test_constant_row_collapses_to_beta(self):
        out = dc.layer_norm(dc.constant(np.full((2, 4), 3.0)), dc.constant(np.ones(4)), dc.constant(np.zeros(4)))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_already_normalised(self):
        out = dc.layer_norm(dc.constant([[1.0, -1.0]]), dc.constant(np.ones(2)), dc.constant(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-11)

    def test_statistics(self):
        # output variance is var / (var + eps), so the 1e-6 bound needs var >= 10
        x = np.random.default_rng(0).normal(2.0, 10.0, size=(10, 16))
        out = dc.layer_norm(dc.constant(x), dc.constant(np.ones(16)), dc.constant(np.zeros(16)), eps=1e-5).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-6)


class TestBackward:
    def test_sum_gives_ones(self):
        w = dc.parameter(np.random.default_rng(0).normal(size=(2, 3, 4)))
        dc.backward(dc.sum(w))
        np.testing.assert_array_equal(w.grad, np.ones((2, 3, 4)))

    def test_zero_grad_at_minimum(self):
        t = np.random.default_rng(0).normal(size=5)
        w = dc.parameter(t.copy())
        d = w - dc.constant(t)
        dc.backward(dc.mean(d * d))
        np.testing.assert_array_equal(w.grad, np.zeros(5))

    def test_accumulation_over_two_uses(self):
        x = np.random.default_rng(1).normal(size=6)
        w = dc.parameter(x)
        dc.backward(dc.sum(w * w))
        np.testing.assert_allclose(w.grad, 2 * x, rtol=0, atol=0)

    def test_non_scalar_loss_rejected(self):
        w = dc.parameter(np.ones(3))
        with pytest.raises(ContractError):
            dc.backward(w * 2.0)

    def test_tape_is_topological_and_unique(self):
        a = dc.parameter(np.ones((2, 2)))
        h = dc.tanh(a @ a)
        loss = dc.sum(h * h + h)
        tape = dc.backward(loss)
        ids = [id(n) for n in tape.nodes]
        assert len(ids) == len(set(ids))
        pos = {i: k for k, i in enumerate(ids)}
        for node in tape.nodes:
            for p in node._parents:
                if p.requires_grad:
                    assert pos[id(p)] < pos[id(node)]

    def test_no_grad_records_nothing(self):
        w = dc.parameter(np.ones(2))
        with dc.no_grad():
            out = dc.sum(w * 3.0)
        assert not out.requires_grad

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(9)
            a = dc.parameter(rng.normal(size=(4, 3)))
            b = dc.parameter(rng.normal(size=(3, 2)))
            loss = dc.sum(dc.softmax(a @ b, axis=1) * dc.constant(rng.normal(size=(4, 2))))
            dc.backward(loss)
            return loss.data.tobytes(), a.grad.tobytes(), b.grad.tobytes()

        assert run() == run()


def _random_op_losses(rng):
    """One small composite loss per op family, with its parameters."""
    x = dc.parameter(rng.normal(size=(3, 4)))
    y = dc.parameter(rng.normal(size=(4, 2)))
    g = dc.parameter(rng.normal(size=4))
    b = dc.parameter(rng.normal(size=4))
    z = dc.parameter(rng.uniform(0.5, 2.0, size=(3, 4)))
    bias = dc.parameter(rng.normal(size=2))
    t = dc.constant(rng.normal(size=(3, 4)))
    return {
        "matmul": (lambda: dc.sum(dc.tanh(x @ y)), [x, y], 1e-6),
        "linear": (lambda: dc.sum(dc.sigmoid(dc.linear(x, y, bias))), [x, y, bias], 1e-6),
        "softmax": (lambda: dc.sum(dc.softmax(x, axis=1) * t), [x], 1e-6),
        "log_softmax": (lambda: dc.sum(dc.log_softmax(x, axis=0) * t), [x], 1e-6),
        "layer_norm": (lambda: dc.sum(dc.layer_norm(x, g, b) * t), [x, g, b], 1e-6),
        "relu": (lambda: dc.sum(dc.relu(x) * t), [x], 1e-4),
        "div_sqrt": (lambda: dc.sum(dc.sqrt(z) / (z + 1.0)), [z], 1e-6),
        "shape": (lambda: dc.sum(dc.concat([dc.transpose(x), dc.broadcast_to(dc.reshape(g, (4, 1)), (4, 2))], axis=1) * dc.constant(np.arange(20.0).reshape(4, 5))), [x, g], 1e-6),
        "stack_index": (lambda: dc.sum(dc.stack([x[0], x[2], g], axis=0) * dc.stack([g, g, g])), [x, g], 1e-6),
    }


@pytest.mark.parametrize("seed", range(20))
def test_gradient_fidelity_randomised(seed):
    rng = np.random.default_rng(seed)
    for name, (loss, params, tol) in _random_op_losses(rng).items():
        err = dc.check_gradients(loss, params, h=1e-5)
        assert err < tol, f"{name}: {err}"


def test_check_gradients_quadratic_exact():
    w = dc.parameter([0.3, -1.2, 2.0])
    target = dc.constant([1.0, 2.0, 3.0])

    def loss():
        d = w - target
        return dc.sum(d * d)

    assert dc.check_gradients(loss, [w]) < 1e-8


class TestAdam:
    def test_zero_grads_leave_params(self):
        w = dc.parameter([1.0, -2.0])
        w.grad = np.zeros(2)
        dc.adam_step([w], dc.AdamState.for_params([w]), lr=0.1)
        np.testing.assert_array_equal(w.data, [1.0, -2.0])

    def test_first_step_magnitude_is_lr(self):
        w = dc.parameter(0.0)
        w.grad = np.array(1.0)
        dc.adam_step([w], dc.AdamState.for_params([w]), lr=0.1)
        assert w.data == pytest.approx(-0.1, abs=1e-8)

    def test_converges_on_scalar_quadratic(self):
        w = dc.parameter(0.0)
        state = dc.AdamState.for_params([w])
        for _ in range(100):
            dc.zero_grad([w])
            d = w - 3.0
            dc.backward(d * d)
            dc.adam_step([w], state, lr=0.1)
        assert abs(w.item() - 3.0) < 0.1

    def test_missing_grad_is_contract_violation(self):
        w = dc.parameter(1.0)
        with pytest.raises(ContractError):
            dc.adam_step([w], dc.AdamState.for_params([w]))

    def test_step_counter_increases(self):
        w = dc.parameter(1.0)
        w.grad = np.array(0.5)
        state = dc.AdamState.for_params([w])
        steps = []
        for _ in range(3):
            dc.adam_step([w], state)
            steps.append(state.step)
        assert steps == [1, 2, 3]
