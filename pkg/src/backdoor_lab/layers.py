"""Dense layers and small MLP stacks built on the tensor engine."""

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor

ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": T.relu,
    "leaky_relu": T.leaky_relu,
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
}


def init_dense(rng, fan_in, fan_out):
    """Weights uniform in +-1/sqrt(fan_in), bias zero."""
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
    weights = Tensor._wrap(w.reshape(-1), (fan_in, fan_out), True)
    bias = Tensor._wrap(np.zeros(fan_out, dtype=np.float32), (fan_out,), True)
    return weights, bias


def dense_layer(x, weights, bias, activation="identity"):
    """activation(x @ weights + bias), bias broadcast over the batch."""
    if activation not in ACTIVATIONS:
        raise ContractError(f"unknown activation {activation!r}")
    if len(x.shape) != 2:
        raise ShapeError(f"dense_layer input must be (batch, in), got {x.shape}")
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(
            f"dense_layer input/weight mismatch: {x.shape} vs {weights.shape}")
    return ACTIVATIONS[activation](T.add_rowvec(T.matmul(x, weights), bias))


class Mlp:
    """A stack of dense layers with one hidden activation and one output activation."""

    def __init__(self, sizes, hidden_activation, output_activation, rng):
        if len(sizes) < 2:
            raise ContractError("Mlp needs at least input and output sizes")
        self.sizes = list(sizes)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.layers = [init_dense(rng, sizes[i], sizes[i + 1])
                       for i in range(len(sizes) - 1)]

    @property
    def params(self):
        out = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out

    def forward(self, x, upto=None):
        """Forward pass; ``upto`` stops after that many layers (activations included)."""
        n = len(self.layers) if upto is None else upto
        for i in range(n):
            w, b = self.layers[i]
            act = self.output_activation if i == len(self.layers) - 1 else self.hidden_activation
            x = dense_layer(x, w, b, act)
        return x

    def param_arrays(self):
        return [p.data for p in self.params]

    def load_param_arrays(self, arrays):
        params = self.params
        if len(arrays) != len(params):
            raise ContractError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            if a.size != p.data.size:
                raise ShapeError(f"parameter size mismatch: {a.size} vs {p.data.size}")
            p.data[:] = a
