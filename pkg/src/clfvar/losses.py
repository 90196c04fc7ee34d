"""Composite training loss: base loss + stability term + variance penalty.

    total = base + lambda_s * |base - base_prev| + lambda_v * VPL

``base`` is cross-entropy for classification and MSE for regression.
``base_prev`` is the previous epoch's mean base loss and is treated as a
constant.  VPL is the mean, over classes present in the batch, of the
population variance of the true-class logits.  The regression variant uses
the variance of per-sample MSE instead.

Every function returns gradients with respect to the logits / predictions;
the model's backward pass carries them to the parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .tensor import as_matrix, check_finite, log_softmax


@dataclass(frozen=True)
class CLFConfig:
    lambda_s: float = 0.0
    lambda_v: float = 0.0
    lambda_wd: float = 0.0
    activation_window: int = 0

    def __post_init__(self):
        for name in ("lambda_s", "lambda_v", "lambda_wd"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.activation_window < 0:
            raise ValueError("activation_window must be non-negative")

    @property
    def weighted(self):
        """True when at least one extra term carries non-zero weight."""
        return self.lambda_s > 0 or self.lambda_v > 0


@dataclass
class LossReport:
    kind: str  # "cel" or "mse"
    base: float
    sl: float
    vpl: float
    total: float
    grad: np.ndarray
    sl_sign: int = 0
    lambda_v_eff: float = 0.0
    active: bool = False
    per_class_variances: dict = field(default_factory=dict)


def _check_labels(labels, n, k):
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got {labels.size}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label outside 0..{k - 1}")
    return labels


def cel(logits, labels):
    """Mean negative log-likelihood and its gradient ``(softmax - onehot)/N``."""
    z = as_matrix(logits)
    n, k = z.shape
    if n < 1:
        raise ValueError("empty batch")
    labels = _check_labels(labels, n, k)
    logp = log_softmax(z)
    rows = np.arange(n)
    value = -float(np.sum(logp[rows, labels])) / n
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= n
    return value, grad


def stable_loss(current, previous):
    """``(|current - previous|, sign)``; zero and sign 0 without a previous value."""
    if previous is None:
        return 0.0, 0
    diff = current - previous
    sign = 1 if diff > 0 else (-1 if diff < 0 else 0)
    return abs(diff), sign


@_accel.njit
def _group_stats_nb(values, groups, n_groups):
    counts = np.zeros(n_groups, dtype=np.int64)
    first = np.zeros(n_groups)
    for i in range(values.size):
        if counts[groups[i]] == 0:
            first[groups[i]] = values[i]
        counts[groups[i]] += 1
    sums = np.zeros(n_groups)
    for i in range(values.size):
        sums[groups[i]] += values[i] - first[groups[i]]
    shift = np.zeros(n_groups)
    for g in range(n_groups):
        if counts[g] > 0:
            shift[g] = sums[g] / counts[g]
    sq = np.zeros(n_groups)
    for i in range(values.size):
        d = (values[i] - first[groups[i]]) - shift[groups[i]]
        sq[groups[i]] += d * d
    means = first + shift
    var = np.zeros(n_groups)
    for g in range(n_groups):
        if counts[g] > 0:
            var[g] = sq[g] / counts[g]
    return counts, means, var


def _group_stats_np(values, groups, n_groups):
    counts = np.bincount(groups, minlength=n_groups)
    present = counts > 0
    first = np.zeros(n_groups)
    uniq, first_idx = np.unique(groups, return_index=True)
    first[uniq] = values[first_idx]
    d = values - first[groups]
    sums = np.bincount(groups, weights=d, minlength=n_groups)
    shift = np.zeros(n_groups)
    shift[present] = sums[present] / counts[present]
    dev = d - shift[groups]
    sq = np.bincount(groups, weights=dev * dev, minlength=n_groups)
    var = np.zeros(n_groups)
    var[present] = sq[present] / counts[present]
    return counts, first + shift, var


def group_stats(values, groups, n_groups):
    """Per-group counts, means and population variances.

    Deviations are taken from each group's first element before averaging,
    so a constant group has exactly zero variance.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    groups = np.ascontiguousarray(groups, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _group_stats_nb(values, groups, n_groups)
    return _group_stats_np(values, groups, n_groups)


def _true_class_logits(logits, labels):
    z = as_matrix(logits)
    n, k = z.shape
    if n < 1:
        raise ValueError("empty batch")
    labels = _check_labels(labels, n, k)
    return z, labels, z[np.arange(n), labels]


def vpl(logits, labels):
    """Variance penalty over true-class logits.

    Returns ``(value, grad, per_class_variances)``.  The gradient uses the
    simplified form ``2 / (|C| m_j) * (f - mean_j)`` on each sample's
    true-class logit and zero elsewhere.
    """
    z, labels, f = _true_class_logits(logits, labels)
    counts, means, var = group_stats(f, labels, z.shape[1])
    present = np.flatnonzero(counts)
    n_present = present.size
    value = float(np.sum(var[present])) / n_present
    grad = np.zeros_like(z)
    coef = 2.0 / (n_present * counts[labels])
    grad[np.arange(z.shape[0]), labels] = coef * (f - means[labels])
    return value, grad, {int(j): float(var[j]) for j in present}


def vpl_gradient_full(logits, labels):
    """VPL gradient keeping the batch-mean term that the simplified form drops.

    d Var_j / d f_i = (2/m_j) * [(f_i - mean_j) - (1/m_j) * sum_k (f_k - mean_j)]

    The bracketed sum is identically zero in exact arithmetic; this function
    exists so the cancellation can be checked numerically.
    """
    z, labels, f = _true_class_logits(logits, labels)
    k = z.shape[1]
    classes = [j for j in range(k) if np.any(labels == j)]
    grad = np.zeros_like(z)
    for j in classes:
        members = np.flatnonzero(labels == j)
        m = members.size
        mean = sum(f[i] for i in members) / m
        residual_sum = sum(f[i] - mean for i in members)
        for i in members:
            grad[i, j] = (2.0 / m) * ((f[i] - mean) - residual_sum / m) / len(classes)
    return grad


def _compose(kind, base, d_base, vpl_value, d_vpl, variances, config, previous, active, lambda_v_eff):
    if lambda_v_eff is None:
        lambda_v_eff = config.lambda_v
    if not active:
        return LossReport(kind, base, 0.0, vpl_value, base, d_base, 0, lambda_v_eff, False, variances)
    sl, sign = stable_loss(base, previous)
    total = base + config.lambda_s * sl + lambda_v_eff * vpl_value
    scale = config.lambda_s * sign
    grad = d_base if scale == 0 else (1.0 + scale) * d_base
    if lambda_v_eff != 0:
        grad = grad + lambda_v_eff * d_vpl
    check_finite(total, "loss")
    return LossReport(kind, base, sl, vpl_value, total, grad, sign, lambda_v_eff, True, variances)


def clf_total(logits, labels, config, prev_cel=None, active=True, lambda_v_eff=None):
    """Composite classification loss and its gradient w.r.t. logits.

    When ``active`` is false the total is plain cross-entropy; VPL is still
    computed and reported but carries no weight.
    """
    base, d_base = cel(logits, labels)
    v, d_v, variances = vpl(logits, labels)
    return _compose("cel", base, d_base, v, d_v, variances, config, prev_cel, active, lambda_v_eff)


def mse(predictions, targets):
    p = as_matrix(predictions)
    t = as_matrix(targets)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    r = p - t
    return float(np.sum(r * r)) / r.size, 2.0 * r / r.size


def regression_vpl(predictions, targets):
    """Population variance of per-sample MSE within the batch, and its gradient."""
    p = as_matrix(predictions)
    t = as_matrix(targets)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    n, h = p.shape
    r = p - t
    per_sample = np.sum(r * r, axis=1) / h
    _, means, var = group_stats(per_sample, np.zeros(n, dtype=np.int64), 1)
    grad = (2.0 / n) * (per_sample - means[0])[:, None] * (2.0 * r / h)
    return float(var[0]), grad


def clf_total_regression(predictions, targets, config, prev_mse=None, active=True, lambda_v_eff=None):
    base, d_base = mse(predictions, targets)
    v, d_v = regression_vpl(predictions, targets)
    return _compose("mse", base, d_base, v, d_v, {}, config, prev_mse, active, lambda_v_eff)
