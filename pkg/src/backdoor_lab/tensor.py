"""Reverse-mode autodiff over dense float32 tensors.

Values are stored flat (row-major) next to their shape. Every op result
remembers its parents and a backward closure; ``backward`` replays the tape
in reverse creation order, so a node's gradient is complete before its own
closure runs. Node ids come from one process-wide counter, which keeps
concurrent graphs disjoint.
"""

import itertools
import math

import numpy as np

from .errors import ContractError, DomainError, NumericsError, ShapeError
from .kernels import active as K

LOG_FLOOR = 1e-7

_node_ids = itertools.count(1)


class Tensor:
    __slots__ = ("shape", "data", "requires_grad", "grad", "_parents",
                 "_backward", "_nid")

    def __init__(self, values, requires_grad=False, dtype=np.float32):
        arr = np.asarray(values, dtype=dtype)
        if not np.all(np.isfinite(arr)):
            raise NumericsError("tensor created with NaN/Inf values")
        self.shape = tuple(arr.shape)  # kept before flattening; 0-d stays ()
        self.data = np.ascontiguousarray(arr).reshape(-1)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None
        self._nid = next(_node_ids)

    @classmethod
    def _wrap(cls, flat, shape, requires_grad):
        """Internal fast path: flat float32 array, no finiteness check."""
        t = cls.__new__(cls)
        t.shape = tuple(shape)
        t.data = flat
        t.requires_grad = requires_grad
        t.grad = np.zeros_like(flat) if requires_grad else None
        t._parents = ()
        t._backward = None
        t._nid = next(_node_ids)
        return t

    @property
    def size(self):
        return self.data.size

    def view(self):
        """The data as a read-oriented ndarray in this tensor's shape."""
        return self.data.reshape(self.shape)

    def item(self):
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, shape {self.shape}")
        return float(self.data[0])

    def detach(self):
        """Same values, cut off from the graph."""
        return Tensor._wrap(self.data, self.shape, False)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[:] = 0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; implementations below
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return mean(self)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        dtype = like.data.dtype if like is not None else np.float32
        return Tensor._wrap(np.full(1, x, dtype=dtype), (), False)
    raise ContractError(f"expected Tensor or scalar, got {type(x).__name__}")


def _result(flat, shape, parents, backward_fn):
    req = any(p.requires_grad for p in parents)
    out = Tensor._wrap(flat, shape, False)
    if req:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g.reshape(-1)


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a, b):
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul needs rank-2 tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    A = a.view()
    B = b.view()
    out = A @ B

    def bw(out_t):
        g = out_t.grad.reshape(out.shape)
        if a.requires_grad:
            _accum(a, g @ B.T)
        if b.requires_grad:
            _accum(b, A.T @ g)

    return _result(out.reshape(-1), out.shape, (a, b), bw)


def _coerce_pair(a, b):
    if isinstance(a, Tensor):
        return a, _as_tensor(b, like=a)
    return _as_tensor(a, like=b), _as_tensor(b)


def _binary_shapes(a, b, opname):
    """Resolve the output shape; only scalar-with-tensor may broadcast."""
    if a.shape == b.shape:
        return a.shape
    if a.shape == ():
        return b.shape
    if b.shape == ():
        return a.shape
    raise ShapeError(f"{opname} shape mismatch: {a.shape} vs {b.shape}")


def _reduce_to(g, shape):
    # gradient of a broadcast scalar operand: total over the expanded axes
    if shape == ():
        garr = np.ascontiguousarray(g.reshape(-1))
        return np.array([K.sum_f64(garr)], dtype=g.dtype)
    return g


def add(a, b):
    a, b = _coerce_pair(a, b)
    shape = _binary_shapes(a, b, "add")
    out = a.view() + b.view()

    def bw(out_t):
        g = out_t.grad
        if a.requires_grad:
            _accum(a, _reduce_to(g, a.shape))
        if b.requires_grad:
            _accum(b, _reduce_to(g, b.shape))

    return _result(out.reshape(-1), shape, (a, b), bw)


def sub(a, b):
    a, b = _coerce_pair(a, b)
    shape = _binary_shapes(a, b, "sub")
    out = a.view() - b.view()

    def bw(out_t):
        g = out_t.grad
        if a.requires_grad:
            _accum(a, _reduce_to(g, a.shape))
        if b.requires_grad:
            _accum(b, _reduce_to(-g, b.shape))

    return _result(out.reshape(-1), shape, (a, b), bw)


def mul(a, b):
    a, b = _coerce_pair(a, b)
    shape = _binary_shapes(a, b, "mul")
    out = a.view() * b.view()

    def bw(out_t):
        g = out_t.grad.reshape(out.shape)
        if a.requires_grad:
            _accum(a, _reduce_to(g * b.view(), a.shape))
        if b.requires_grad:
            _accum(b, _reduce_to(g * a.view(), b.shape))

    return _result(out.reshape(-1), shape, (a, b), bw)


def neg(a):
    out = -a.data

    def bw(out_t):
        if a.requires_grad:
            _accum(a, -out_t.grad)

    return _result(out, a.shape, (a,), bw)


def sigmoid(a):
    y = K.sigmoid_fwd(a.data)

    def bw(out_t):
        if a.requires_grad:
            _accum(a, K.sigmoid_bwd(y, out_t.grad))

    return _result(y, a.shape, (a,), bw)


def tanh(a):
    y = K.tanh_fwd(a.data)

    def bw(out_t):
        if a.requires_grad:
            _accum(a, K.tanh_bwd(y, out_t.grad))

    return _result(y, a.shape, (a,), bw)


def relu(a):
    y = K.relu_fwd(a.data)

    def bw(out_t):
        if a.requires_grad:
            _accum(a, K.relu_bwd(y, out_t.grad))

    return _result(y, a.shape, (a,), bw)


def leaky_relu(a, slope=0.2):
    s = a.data.dtype.type(slope)
    y = K.leaky_relu_fwd(a.data, s)

    def bw(out_t):
        if a.requires_grad:
            _accum(a, K.leaky_relu_bwd(y, out_t.grad, s))

    return _result(y, a.shape, (a,), bw)


def log(a):
    if np.any(a.data < 0):
        raise DomainError(
            f"log input has negative values (min {float(a.data.min()):g}); "
            f"inputs are clamped to [{LOG_FLOOR:g}, inf) but must be non-negative")
    x = a.data
    floor = a.data.dtype.type(LOG_FLOOR)
    y = K.log_fwd(x, floor)

    def bw(out_t):
        if a.requires_grad:
            _accum(a, K.log_bwd(x, out_t.grad, floor))

    return _result(y, a.shape, (a,), bw)


def tensor_sum(a):
    total = K.sum_f64(a.data)

    def bw(out_t):
        if a.requires_grad:
            _accum(a, np.full_like(a.data, out_t.grad[0]))

    return _result(np.array([total], dtype=a.data.dtype), (), (a,), bw)


def mean(a):
    n = a.size
    total = K.sum_f64(a.data) / n

    def bw(out_t):
        if a.requires_grad:
            _accum(a, np.full_like(a.data, out_t.grad[0] / a.data.dtype.type(n)))

    return _result(np.array([total], dtype=a.data.dtype), (), (a,), bw)


def add_rowvec(m, v):
    """Add a length-n vector to every row of a (batch, n) matrix."""
    if len(m.shape) != 2 or len(v.shape) != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec needs (batch, n) and (n,), got {m.shape} and {v.shape}")
    out = m.view() + v.view()

    def bw(out_t):
        g = out_t.grad.reshape(out.shape)
        if m.requires_grad:
            _accum(m, g)
        if v.requires_grad:
            _accum(v, np.sum(g, axis=0, dtype=np.float64).astype(v.data.dtype))

    return _result(out.reshape(-1), out.shape, (m, v), bw)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Accumulate gradients of ``loss`` into every reachable requires_grad leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._nid in seen or not t.requires_grad:
            continue
        seen.add(t._nid)
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._nid, reverse=True)
    _accum(loss, np.ones_like(loss.data))
    for t in nodes:
        if t._backward is not None:
            t._backward(t)


def finite_check(tensors, context):
    """Abort with a diagnostic if any tensor holds non-finite values."""
    for i, t in enumerate(tensors):
        if not np.all(np.isfinite(t.data)):
            raise NumericsError(f"non-finite parameter values in tensor {i} after {context}")


def check_finite_scalar(value, context):
    if not math.isfinite(value):
        raise NumericsError(f"non-finite loss ({value}) at {context}")
    return value
