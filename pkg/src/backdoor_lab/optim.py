"""SGD and Adam over lists of parameter tensors."""

import numpy as np

from .errors import ContractError
from .kernels import active as K
from .tensor import finite_check


class Sgd:
    """Plain gradient descent: p <- p - lr * g."""

    kind = "sgd"

    def __init__(self, params, lr):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def step(self):
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"parameter {i} has no gradient; run backward first")
            K.sgd_update(p.data, p.grad, self.lr)
            p.grad[:] = 0
        self.step_count += 1
        finite_check(self.params, f"sgd step {self.step_count}")

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class Adam:
    """Bias-corrected Adam; moments are float32 arrays shaped like each param."""

    kind = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self):
        self.step_count += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"parameter {i} has no gradient; run backward first")
            K.adam_update(p.data, p.grad, self.m[i], self.v[i],
                          self.lr, self.beta1, self.beta2, self.eps, self.step_count)
            p.grad[:] = 0
        finite_check(self.params, f"adam step {self.step_count}")

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
