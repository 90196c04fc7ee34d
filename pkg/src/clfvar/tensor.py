"""Dense float64 helpers used by the models and losses.

Matrices are plain 2-D ``numpy.float64`` arrays.  ``matmul`` accumulates
every output entry left to right over the inner index, in both backends,
so products are bitwise reproducible regardless of BLAS threading.
"""

import numpy as np

from . import _accel


class NonFiniteError(FloatingPointError):
    """Raised when a public operation produces or receives NaN/Inf."""


def as_matrix(x):
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return np.ascontiguousarray(m)


def check_finite(x, what="value"):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite {what}")
    return x


@_accel.njit
def _matmul_nb(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def _matmul_np(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for p in range(a.shape[1]):
        out += a[:, p : p + 1] * b[p : p + 1, :]
    return out


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    out = _matmul_nb(a, b) if _accel.USE_NUMBA else _matmul_np(a, b)
    return check_finite(out, "matmul result")


def log_softmax(logits):
    """Row-wise log-softmax, stabilised by subtracting the row maximum.

    Accepts a vector or an ``N x K`` matrix and returns the same shape.
    """
    x = np.asarray(logits, dtype=np.float64)
    check_finite(x, "logits")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def mean_and_variance(values):
    """Mean and population variance (divisor ``m``) of a non-empty list."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("mean_and_variance of an empty list")
    check_finite(v, "values")
    d = v - v[0]  # shifted data: a constant list gives exactly zero
    shift = float(np.sum(d)) / v.size
    dev = d - shift
    return float(v[0]) + shift, float(np.sum(dev * dev)) / v.size


def sample_sd(values):
    """Sample standard deviation (divisor ``n - 1``), two-pass."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("sample SD needs at least two values")
    mean = float(np.sum(v)) / v.size
    dev = v - mean
    return float(np.sqrt(np.sum(dev * dev) / (v.size - 1)))
