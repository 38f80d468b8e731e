"""Optimizer behavior: update rules, grad clearing, contracts, no-NaN invariant."""

import numpy as np
import pytest

from backdoor_lab import tensor as T
from backdoor_lab.errors import ContractError, NumericsError
from backdoor_lab.layers import Mlp
from backdoor_lab.optim import Adam, Sgd
from backdoor_lab.tensor import Tensor, backward


def param(values):
    return Tensor(values, requires_grad=True)


class TestSgd:
    def test_update_rule(self):
        p = param([1.0])
        p.grad[:] = 2.0
        Sgd([p], lr=0.1).step()
        assert p.data[0] == pytest.approx(0.8)

    def test_zero_gradient_leaves_params_unchanged(self):
        p = param([1.5, -2.0])
        Sgd([p], lr=0.1).step()
        assert p.data.tolist() == [1.5, -2.0]

    def test_grads_cleared_after_step(self):
        p = param([1.0])
        p.grad[:] = 3.0
        Sgd([p], lr=0.1).step()
        assert p.grad.tolist() == [0.0]

    def test_missing_grad_is_contract_error(self):
        with pytest.raises(ContractError):
            Sgd([Tensor([1.0])], lr=0.1).step()

    def test_nonpositive_lr_rejected(self):
        with pytest.raises(ContractError):
            Sgd([param([1.0])], lr=0.0)


class TestAdam:
    def test_first_step_with_unit_gradient_moves_by_lr(self):
        # bias correction cancels exactly on step 1; start at 0 so the stored
        # float32 value resolves the update magnitude to well below 1e-9
        p = param(np.zeros(5))
        p.grad[:] = 1.0
        opt = Adam([p], lr=1e-3)
        opt.step()
        np.testing.assert_allclose(np.abs(p.data.astype(np.float64)), 1e-3, atol=1e-9)

    def test_zero_gradient_from_fresh_state_is_noop(self):
        p = param([0.7])
        Adam([p], lr=1e-2).step()
        assert p.data[0] == pytest.approx(0.7)

    def test_moments_match_param_shapes(self):
        a = param(np.zeros((3, 4)))
        b = param(np.zeros(4))
        opt = Adam([a, b])
        assert opt.m[0].size == a.data.size and opt.v[1].size == b.data.size

    def test_step_count_increases(self):
        p = param([1.0])
        opt = Adam([p])
        for expected in (1, 2, 3):
            p.grad[:] = 1.0
            opt.step()
            assert opt.step_count == expected

    def test_missing_grad_is_contract_error(self):
        with pytest.raises(ContractError):
            Adam([Tensor([1.0])]).step()


def test_nonfinite_params_abort_with_diagnostic():
    p = param([1.0])
    p.grad[:] = 1e30
    with pytest.raises(NumericsError):
        Sgd([p], lr=1e30).step()


def test_training_is_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(99)
        mlp = Mlp([6, 8, 4], "relu", "sigmoid", rng)
        opt = Adam(mlp.params, lr=1e-3)
        data_rng = np.random.default_rng(5)
        x = Tensor(data_rng.normal(size=(10, 6)).astype(np.float32))
        ref = Tensor(data_rng.uniform(size=(10, 4)).astype(np.float32))
        for _ in range(20):
            out = mlp.forward(x)
            d = T.sub(out, ref)
            backward(T.mean(T.mul(d, d)))
            opt.step()
        return [p.data.copy() for p in mlp.params]

    first, second = run(), run()
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
