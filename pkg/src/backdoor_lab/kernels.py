"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The backend is picked once at import time from the env var
``BACKDOOR_LAB_KERNELS`` ("numba" or "numpy"). Unset means numba when
importable, numpy otherwise. Both variants of every kernel stay importable
(``numpy_kernels`` / ``numba_kernels()``) so tests and benchmarks can compare
them directly.

Elementwise kernels take and return flat, C-contiguous float arrays and
preserve the input dtype (training runs float32; the gradient-check suite
runs float64). Scalar arguments arrive pre-cast to the array dtype. The
optimizer kernels update their arrays in place; reductions accumulate in
float64.
"""

import math
import os

import numpy as np

from .errors import ConfigError

_ENV_VAR = "BACKDOOR_LAB_KERNELS"


# ---------------------------------------------------------------------------
# pure-numpy variants
# ---------------------------------------------------------------------------

def _np_sigmoid_fwd(x):
    # exp of a non-positive value only, so no overflow on either branch
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(x.dtype, copy=False)


def _np_sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def _np_tanh_fwd(x):
    return np.tanh(x)


def _np_tanh_bwd(y, g):
    return g * (1.0 - y * y)


def _np_relu_fwd(x):
    return np.maximum(x, 0.0).astype(x.dtype, copy=False)


def _np_relu_bwd(y, g):
    return np.where(y > 0, g, 0.0).astype(g.dtype, copy=False)


def _np_leaky_relu_fwd(x, slope):
    return np.where(x >= 0, x, slope * x).astype(x.dtype, copy=False)


def _np_leaky_relu_bwd(y, g, slope):
    # slope > 0 keeps the sign of x, so the sign of y decides the branch
    return np.where(y >= 0, g, slope * g).astype(g.dtype, copy=False)


def _np_log_fwd(x, floor):
    return np.log(np.maximum(x, floor)).astype(x.dtype, copy=False)


def _np_log_bwd(x, g, floor):
    # subgradient 0 where the clamp was active
    return np.where(x >= floor, g / np.maximum(x, floor), 0.0).astype(g.dtype, copy=False)


def _np_sgd_update(p, g, lr):
    p -= np.float32(lr) * g


def _np_adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    # 1-beta factors rounded once from float64 so step-1 bias correction cancels
    b1 = np.float32(beta1)
    b2 = np.float32(beta2)
    m *= b1
    m += np.float32(1.0 - beta1) * g
    v *= b2
    v += np.float32(1.0 - beta2) * g * g
    mhat = m / np.float32(1.0 - beta1 ** t)
    vhat = v / np.float32(1.0 - beta2 ** t)
    p -= np.float32(lr) * mhat / (np.sqrt(vhat) + np.float32(eps))


def _np_sum_f64(x):
    return float(np.sum(x, dtype=np.float64))


class _Kernels:
    """One selected set of kernel implementations."""

    def __init__(self, name, fns):
        self.name = name
        (self.sigmoid_fwd, self.sigmoid_bwd, self.tanh_fwd, self.tanh_bwd,
         self.relu_fwd, self.relu_bwd, self.leaky_relu_fwd, self.leaky_relu_bwd,
         self.log_fwd, self.log_bwd, self.sgd_update, self.adam_update,
         self.sum_f64) = fns


numpy_kernels = _Kernels("numpy", (
    _np_sigmoid_fwd, _np_sigmoid_bwd, _np_tanh_fwd, _np_tanh_bwd,
    _np_relu_fwd, _np_relu_bwd, _np_leaky_relu_fwd, _np_leaky_relu_bwd,
    _np_log_fwd, _np_log_bwd, _np_sgd_update, _np_adam_update, _np_sum_f64))


# ---------------------------------------------------------------------------
# numba variants
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def sigmoid_fwd(x):
        out = np.empty_like(x)
        for i in range(x.size):
            t = math.exp(-abs(x[i]))
            if x[i] >= 0:
                out[i] = 1.0 / (1.0 + t)
            else:
                out[i] = t / (1.0 + t)
        return out

    @njit(cache=True)
    def sigmoid_bwd(y, g):
        out = np.empty_like(y)
        for i in range(y.size):
            out[i] = g[i] * y[i] * (1.0 - y[i])
        return out

    @njit(cache=True)
    def tanh_fwd(x):
        out = np.empty_like(x)
        for i in range(x.size):
            out[i] = math.tanh(x[i])
        return out

    @njit(cache=True)
    def tanh_bwd(y, g):
        out = np.empty_like(y)
        for i in range(y.size):
            out[i] = g[i] * (1.0 - y[i] * y[i])
        return out

    @njit(cache=True)
    def relu_fwd(x):
        out = np.empty_like(x)
        for i in range(x.size):
            out[i] = x[i] if x[i] > 0 else 0.0
        return out

    @njit(cache=True)
    def relu_bwd(y, g):
        out = np.empty_like(y)
        for i in range(y.size):
            out[i] = g[i] if y[i] > 0 else 0.0
        return out

    @njit(cache=True)
    def leaky_relu_fwd(x, slope):
        out = np.empty_like(x)
        for i in range(x.size):
            out[i] = x[i] if x[i] >= 0 else slope * x[i]
        return out

    @njit(cache=True)
    def leaky_relu_bwd(y, g, slope):
        out = np.empty_like(y)
        for i in range(y.size):
            out[i] = g[i] if y[i] >= 0 else slope * g[i]
        return out

    @njit(cache=True)
    def log_fwd(x, floor):
        out = np.empty_like(x)
        for i in range(x.size):
            out[i] = math.log(x[i] if x[i] > floor else floor)
        return out

    @njit(cache=True)
    def log_bwd(x, g, floor):
        out = np.empty_like(x)
        for i in range(x.size):
            out[i] = g[i] / x[i] if x[i] >= floor else 0.0
        return out

    @njit(cache=True)
    def sgd_update(p, g, lr):
        r = np.float32(lr)
        for i in range(p.size):
            p[i] -= r * g[i]

    @njit(cache=True)
    def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
        b1 = np.float32(beta1)
        b2 = np.float32(beta2)
        a1 = np.float32(1.0 - beta1)
        a2 = np.float32(1.0 - beta2)
        c1 = np.float32(1.0 - beta1 ** t)
        c2 = np.float32(1.0 - beta2 ** t)
        r = np.float32(lr)
        e = np.float32(eps)
        for i in range(p.size):
            m[i] = b1 * m[i] + a1 * g[i]
            v[i] = b2 * v[i] + a2 * g[i] * g[i]
            mhat = m[i] / c1
            vhat = v[i] / c2
            p[i] -= r * mhat / (np.float32(math.sqrt(vhat)) + e)

    @njit(cache=True)
    def sum_f64(x):
        acc = 0.0
        for i in range(x.size):
            acc += np.float64(x[i])
        return acc

    return _Kernels("numba", (
        sigmoid_fwd, sigmoid_bwd, tanh_fwd, tanh_bwd,
        relu_fwd, relu_bwd, leaky_relu_fwd, leaky_relu_bwd,
        log_fwd, log_bwd, sgd_update, adam_update, sum_f64))


_numba_cache = None


def numba_kernels():
    """Build (once) and return the numba kernel set; raises if numba is absent."""
    global _numba_cache
    if _numba_cache is None:
        _numba_cache = _build_numba_kernels()
    return _numba_cache


def _select_backend():
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return numpy_kernels
    if choice == "numba":
        return numba_kernels()
    if choice:
        raise ConfigError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    try:
        return numba_kernels()
    except ImportError:
        return numpy_kernels


active = _select_backend()
KERNEL_BACKEND = active.name
