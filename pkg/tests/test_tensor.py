"""Tensor engine: op values, backward pass, gradient oracle, graph behavior."""

import numpy as np
import pytest

from gradcheck import assert_grads_close, numeric_grads

from backdoor_lab import tensor as T
from backdoor_lab.errors import ContractError, DomainError, NumericsError, ShapeError
from backdoor_lab.layers import dense_layer, init_dense
from backdoor_lab.tensor import Tensor, backward


def t64(values, requires_grad=False):
    return Tensor(values, requires_grad=requires_grad, dtype=np.float64)


class TestTensorBasics:
    def test_flat_storage_row_major(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.data.tolist() == [1.0, 2.0, 3.0, 4.0]
        assert t.data.dtype == np.float32

    def test_nan_rejected_at_creation(self):
        with pytest.raises(NumericsError):
            Tensor([1.0, float("nan")])
        with pytest.raises(NumericsError):
            Tensor([float("inf")])

    def test_grad_allocated_for_leaves(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        assert t.grad is not None and t.grad.tolist() == [0.0, 0.0]
        assert Tensor([1.0]).grad is None

    def test_detach_shares_values_without_graph(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        d = t.detach()
        assert not d.requires_grad
        assert np.array_equal(d.data, t.data)


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        eye = Tensor(np.eye(2))
        assert T.matmul(a, eye).view().tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_hand_multiplication(self):
        a = Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = Tensor([[0.0, 1.0], [1.0, 0.0]])
        assert T.matmul(a, b).view().tolist() == [[0.0, 1.0], [0.0, 0.0]]

    def test_dimension_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_backward_formulas(self):
        rng = np.random.default_rng(0)
        a = t64(rng.normal(size=(3, 4)), requires_grad=True)
        b = t64(rng.normal(size=(4, 2)), requires_grad=True)
        out = T.matmul(a, b)
        loss = T.tensor_sum(out)
        backward(loss)
        g = np.ones((3, 2))
        np.testing.assert_allclose(a.grad.reshape(3, 4), g @ b.view().T, rtol=1e-12)
        np.testing.assert_allclose(b.grad.reshape(4, 2), a.view().T @ g, rtol=1e-12)


class TestElementwise:
    def test_sigmoid_of_zero(self):
        assert T.sigmoid(Tensor([0.0])).item() == pytest.approx(0.5)

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = T.sigmoid(Tensor([-100.0, 100.0])).view()
        assert out[0] == pytest.approx(0.0, abs=1e-30)
        assert out[1] == pytest.approx(1.0)

    def test_relu_negative_value_and_grad(self):
        x = t64([-3.0], requires_grad=True)
        y = T.relu(x)
        assert y.item() == 0.0
        backward(T.tensor_sum(y))
        assert x.grad.tolist() == [0.0]

    def test_log_of_one(self):
        x = t64([1.0], requires_grad=True)
        y = T.log(x)
        assert y.item() == 0.0
        backward(T.tensor_sum(y))
        assert x.grad.tolist() == [1.0]

    def test_log_clamps_small_values(self):
        assert T.log(Tensor([0.0])).item() == pytest.approx(np.log(1e-7), rel=1e-6)

    def test_log_rejects_negative(self):
        with pytest.raises(DomainError):
            T.log(Tensor([-0.5]))

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_scalar_broadcast(self):
        x = Tensor([1.0, 2.0])
        assert T.sub(1.0, x).view().tolist() == [0.0, -1.0]
        assert T.mul(x, 2.0).view().tolist() == [2.0, 4.0]
        assert (x + 1.0).view().tolist() == [2.0, 3.0]

    def test_neg(self):
        assert T.neg(Tensor([1.5, -2.0])).view().tolist() == [-1.5, 2.0]


class TestBackward:
    def test_square_gradient(self):
        x = t64([3.0], requires_grad=True)
        backward(T.mul(x, x))
        assert x.grad.tolist() == [6.0]

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            backward(T.mul(x, x))

    def test_disconnected_leaf_keeps_zero_grad(self):
        x = t64([2.0], requires_grad=True)
        other = t64([5.0], requires_grad=True)
        backward(T.mul(x, x))
        assert other.grad.tolist() == [0.0]

    def test_sigmoid_matmul_sum_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        w0 = rng.normal(size=(3, 4))
        x0 = rng.normal(size=(4, 2))
        w = t64(w0, requires_grad=True)
        x = t64(x0, requires_grad=True)
        backward(T.tensor_sum(T.sigmoid(T.matmul(w, x))))

        def f(wa, xa):
            return T.tensor_sum(T.sigmoid(T.matmul(Tensor._wrap(wa.reshape(-1), (3, 4), False),
                                                   Tensor._wrap(xa.reshape(-1), (4, 2), False)))).item()

        numeric = numeric_grads(f, [w0.copy(), x0.copy()])
        assert_grads_close([w.grad, x.grad], numeric)

    def test_reused_node_accumulates_once_per_consumer(self):
        x = t64([2.0], requires_grad=True)
        y = T.add(T.mul(x, x), x)  # x^2 + x -> 2x + 1 = 5
        backward(y)
        assert x.grad.tolist() == [5.0]

    def test_visits_reverse_creation_order_exactly_once(self):
        a = t64([1.0], requires_grad=True)
        b = t64([2.0], requires_grad=True)
        c = T.mul(a, b)
        d = T.add(c, a)
        e = T.mul(d, c)
        visited = []
        for node in (c, d, e):
            orig = node._backward

            def wrapped(out_t, orig=orig, nid=node._nid):
                visited.append(nid)
                orig(out_t)

            node._backward = wrapped
        backward(e)
        assert visited == sorted(visited, reverse=True)
        assert len(visited) == len(set(visited)) == 3


class TestGraphIsolation:
    def _node_ids(self, root):
        seen = set()
        stack = [root]
        while stack:
            t = stack.pop()
            if t._nid in seen:
                continue
            seen.add(t._nid)
            stack.extend(t._parents)
        return seen

    def test_two_graphs_share_no_ids_or_grad_buffers(self):
        x1 = Tensor([1.0, 2.0], requires_grad=True)
        g1 = T.mean(T.mul(x1, x1))
        x2 = Tensor([1.0, 2.0], requires_grad=True)
        g2 = T.mean(T.mul(x2, x2))
        ids1, ids2 = self._node_ids(g1), self._node_ids(g2)
        assert not (ids1 & ids2)
        backward(g1)
        backward(g2)
        assert x1.grad is not x2.grad
        np.testing.assert_array_equal(x1.grad, x2.grad)


OPS = {
    "matmul": {
        "make": lambda rng: [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))],
        "apply": lambda a, b: T.matmul(a, b),
    },
    "add": {
        "make": lambda rng: [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))],
        "apply": lambda a, b: T.add(a, b),
    },
    "sub": {
        "make": lambda rng: [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))],
        "apply": lambda a, b: T.sub(a, b),
    },
    "mul": {
        "make": lambda rng: [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))],
        "apply": lambda a, b: T.mul(a, b),
    },
    "neg": {
        "make": lambda rng: [rng.normal(size=(3, 4))],
        "apply": T.neg,
    },
    "sigmoid": {
        "make": lambda rng: [rng.normal(size=(3, 4))],
        "apply": T.sigmoid,
    },
    "tanh": {
        "make": lambda rng: [rng.normal(size=(3, 4))],
        "apply": T.tanh,
    },
    # keep relu-family inputs away from the kink so the FD oracle is valid
    "relu": {
        "make": lambda rng: [rng.normal(size=(3, 4)) + np.sign(rng.normal(size=(3, 4))) * 0.2],
        "apply": T.relu,
    },
    "leaky_relu": {
        "make": lambda rng: [rng.normal(size=(3, 4)) + np.sign(rng.normal(size=(3, 4))) * 0.2],
        "apply": lambda a: T.leaky_relu(a, 0.2),
    },
    "log": {
        "make": lambda rng: [rng.uniform(0.1, 3.0, size=(3, 4))],
        "apply": T.log,
    },
    "sum": {
        "make": lambda rng: [rng.normal(size=(3, 4))],
        "apply": T.tensor_sum,
    },
    "mean": {
        "make": lambda rng: [rng.normal(size=(3, 4))],
        "apply": T.mean,
    },
    "add_rowvec": {
        "make": lambda rng: [rng.normal(size=(3, 4)), rng.normal(size=(4,))],
        "apply": T.add_rowvec,
    },
}


def run_gradient_suite(cases_per_op=20, seed=123):
    """Shared by the unit tests and acceptance criterion: FD check per op."""
    rng = np.random.default_rng(seed)
    for name, spec in OPS.items():
        for _ in range(cases_per_op):
            arrays = spec["make"](rng)
            tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
            out = spec["apply"](*tensors)
            loss = out if out.shape == () else T.mean(T.mul(out, out))
            backward(loss)

            def f(*arrs):
                ts = [Tensor._wrap(a.reshape(-1), a.shape, False) for a in arrs]
                o = spec["apply"](*ts)
                return (o if o.shape == () else T.mean(T.mul(o, o))).item()

            numeric = numeric_grads(f, [a.copy() for a in arrays])
            assert_grads_close([t.grad for t in tensors], numeric)


@pytest.mark.parametrize("op_name", sorted(OPS))
def test_gradient_matches_finite_differences(op_name):
    rng = np.random.default_rng(hash(op_name) % 2 ** 31)
    spec = OPS[op_name]
    for _ in range(20):
        arrays = spec["make"](rng)
        tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
        out = spec["apply"](*tensors)
        loss = out if out.shape == () else T.mean(T.mul(out, out))
        backward(loss)

        def f(*arrs):
            ts = [Tensor._wrap(a.reshape(-1), a.shape, False) for a in arrs]
            o = spec["apply"](*ts)
            return (o if o.shape == () else T.mean(T.mul(o, o))).item()

        numeric = numeric_grads(f, [a.copy() for a in arrays])
        assert_grads_close([t.grad for t in tensors], numeric)


def test_scalar_broadcast_gradient():
    rng = np.random.default_rng(5)
    for _ in range(10):
        s0 = rng.normal(size=1)
        a0 = rng.normal(size=(3, 4))
        s = Tensor(s0.reshape(()), requires_grad=True, dtype=np.float64)
        a = Tensor(a0, requires_grad=True, dtype=np.float64)
        backward(T.mean(T.mul(T.mul(s, a), T.mul(s, a))))

        def f(sv, av):
            st = Tensor._wrap(sv.reshape(-1), (), False)
            at = Tensor._wrap(av.reshape(-1), (3, 4), False)
            return T.mean(T.mul(T.mul(st, at), T.mul(st, at))).item()

        numeric = numeric_grads(f, [s0.copy(), a0.copy()])
        assert_grads_close([s.grad, a.grad], numeric)


class TestDenseLayer:
    def test_zero_weights_zero_bias_identity_activation(self):
        x = Tensor(np.ones((2, 3)))
        w = Tensor(np.zeros((3, 4)), requires_grad=True)
        b = Tensor(np.zeros(4), requires_grad=True)
        assert np.all(dense_layer(x, w, b, "identity").view() == 0.0)

    def test_identical_rows_give_identical_outputs(self):
        rng = np.random.default_rng(3)
        w, b = init_dense(rng, 3, 4)
        x = Tensor(np.tile(rng.normal(size=(1, 3)).astype(np.float32), (2, 1)))
        out = dense_layer(x, w, b, "sigmoid").view()
        np.testing.assert_array_equal(out[0], out[1])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x0 = rng.normal(size=(3, 4))
        w0 = rng.normal(size=(4, 5))
        b0 = rng.normal(size=5)
        x = t64(x0, requires_grad=True)
        w = t64(w0, requires_grad=True)
        b = t64(b0, requires_grad=True)
        backward(T.mean(dense_layer(x, w, b, "sigmoid")))

        def f(xa, wa, ba):
            return T.mean(dense_layer(Tensor._wrap(xa.reshape(-1), (3, 4), False),
                                      Tensor._wrap(wa.reshape(-1), (4, 5), False),
                                      Tensor._wrap(ba.reshape(-1), (5,), False),
                                      "sigmoid")).item()

        numeric = numeric_grads(f, [x0.copy(), w0.copy(), b0.copy()])
        assert_grads_close([x.grad, w.grad, b.grad], numeric)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dense_layer(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))), Tensor(np.zeros(5)))


def test_weight_init_bounds_and_determinism():
    w1, b1 = init_dense(np.random.default_rng(42), 64, 32)
    w2, b2 = init_dense(np.random.default_rng(42), 64, 32)
    bound = 1.0 / np.sqrt(64)
    assert np.all(np.abs(w1.data) <= bound)
    assert np.all(b1.data == 0.0)
    np.testing.assert_array_equal(w1.data, w2.data)
