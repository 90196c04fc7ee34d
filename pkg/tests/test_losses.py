import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _gradcheck import numeric_grad, relative_error
from clfvar import _accel
from clfvar.losses import (
    CLFConfig,
    _group_stats_np,
    cel,
    clf_total,
    clf_total_regression,
    group_stats,
    mse,
    regression_vpl,
    stable_loss,
    vpl,
    vpl_gradient_full,
)


def test_cel_symmetric():
    value, _ = cel([[0.0, 0.0]], [0])
    assert value == pytest.approx(math.log(2), abs=1e-15)


def test_cel_hand_softmax():
    # p(class 0) = 3 / (3 + 1) = 3/4, so the loss is ln(4/3)
    value, _ = cel([[math.log(3.0), 0.0]], [0])
    assert value == pytest.approx(0.287682072451781, abs=1e-12)


def test_cel_confident_limit():
    value, _ = cel([[60.0, -60.0]], [0])
    assert value < 1e-50


def test_cel_gradient_rows():
    z = np.array([[1.0, 2.0, 0.5], [0.0, 0.0, 0.0]])
    _, g = cel(z, [2, 0])
    p = np.exp(z) / np.exp(z).sum(1, keepdims=True)
    expected = (p - np.eye(3)[[2, 0]]) / 2
    np.testing.assert_allclose(g, expected, rtol=1e-14, atol=1e-15)


def test_cel_bad_label():
    with pytest.raises(ValueError):
        cel([[0.0, 1.0]], [2])


@pytest.mark.parametrize("current,previous,expected", [(0.9, 0.7, (0.2, 1)), (0.5, 0.5, (0.0, 0)), (0.3, None, (0.0, 0)), (0.2, 0.5, (0.3, -1))])
def test_stable_loss(current, previous, expected):
    value, sign = stable_loss(current, previous)
    assert value == pytest.approx(expected[0], abs=1e-15)
    assert sign == expected[1]


def test_vpl_hand_example():
    # class 0 true logits {1, 3}: mean 2, var 1; class 1 logit {2}: var 0
    logits = np.array([[1.0, 0.0], [3.0, 5.0], [7.0, 2.0]])
    value, grad, variances = vpl(logits, [0, 0, 1])
    assert variances == {0: 1.0, 1: 0.0}
    assert value == 0.5
    assert grad.tolist() == [[-0.5, 0.0], [0.5, 0.0], [0.0, 0.0]]


def test_vpl_constant_class():
    logits = np.array([[0.3, 1.0], [0.3, -2.0], [0.3, 4.0]])
    value, grad, _ = vpl(logits, [0, 0, 0])
    assert value == 0.0
    assert not grad.any()


def _random_batch(rs, n=12, k=4):
    return rs.normal(scale=3.0, size=(n, k)), rs.integers(0, k, size=n)


def test_vpl_full_gradient_equals_simplified():
    rs = np.random.default_rng(0)
    for _ in range(100):
        z, y = _random_batch(rs)
        _, simple, _ = vpl(z, y)
        assert np.max(np.abs(simple - vpl_gradient_full(z, y))) <= 1e-12


def test_centred_logits_sum_to_zero():
    rs = np.random.default_rng(1)
    for _ in range(50):
        z, y = _random_batch(rs)
        f = z[np.arange(len(y)), y]
        counts, means, _ = group_stats(f, y, z.shape[1])
        for j in np.flatnonzero(counts):
            assert abs(np.sum(f[y == j] - means[j])) <= 1e-12


# Logits on a 1e-6 grid: distinct values closer than ~1e-154 square to zero.
@given(st.lists(st.tuples(st.floats(-20, 20).map(lambda v: round(v, 6)), st.integers(0, 2)), min_size=1, max_size=20))
@settings(max_examples=150)
def test_vpl_non_negative_and_zero_iff_equal(pairs):
    f = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    logits = np.zeros((len(f), 3))
    logits[np.arange(len(f)), y] = f
    value, _, _ = vpl(logits, y)
    assert value >= 0.0
    all_equal = all(np.all(f[y == j] == f[y == j][0]) for j in np.unique(y))
    assert (value == 0.0) == all_equal


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba missing")
def test_group_stats_backends_bitwise_equal():
    from clfvar.losses import _group_stats_nb

    rs = np.random.default_rng(2)
    for _ in range(100):
        n, k = rs.integers(1, 40), rs.integers(1, 6)
        v, g = rs.normal(size=n) * 50, rs.integers(0, k, size=n)
        for a, b in zip(_group_stats_nb(v, g, k), _group_stats_np(v, g, k)):
            assert np.array_equal(a, b)


def test_clf_total_composition():
    # CEL = ln 2 on symmetric logits; SL = 0.2 against prev; VPL = 0.5
    cfg = CLFConfig(lambda_s=0.1, lambda_v=0.2)
    logits = np.array([[1.0, 1.0], [3.0, 3.0], [2.0, 2.0]])
    rep = clf_total(logits, [0, 0, 1], cfg, prev_cel=math.log(2) - 0.2)
    assert rep.base == pytest.approx(0.693147, abs=1e-6)
    assert rep.sl == pytest.approx(0.2, abs=1e-12)
    assert rep.vpl == 0.5
    assert rep.total == pytest.approx(0.813147, abs=1e-6)
    assert rep.total == pytest.approx(rep.base + 0.1 * rep.sl + 0.2 * rep.vpl, abs=1e-15)


def test_clf_total_reduces_to_cel_bitwise():
    rs = np.random.default_rng(3)
    z, y = _random_batch(rs)
    base, d_base = cel(z, y)
    rep = clf_total(z, y, CLFConfig(0.0, 0.0), prev_cel=0.1)
    assert rep.total == base
    assert np.array_equal(rep.grad, d_base)


def test_clf_total_inactive():
    rs = np.random.default_rng(4)
    z, y = _random_batch(rs)
    base, d_base = cel(z, y)
    v, _, _ = vpl(z, y)
    rep = clf_total(z, y, CLFConfig(0.5, 0.5), prev_cel=0.1, active=False)
    assert (rep.total, rep.sl, rep.vpl) == (base, 0.0, v)
    assert np.array_equal(rep.grad, d_base)


def test_clf_total_gradient_formula():
    rs = np.random.default_rng(5)
    z, y = _random_batch(rs)
    cfg = CLFConfig(0.3, 0.7)
    base, d_base = cel(z, y)
    _, d_v, _ = vpl(z, y)
    rep = clf_total(z, y, cfg, prev_cel=base + 1.0, lambda_v_eff=0.4)
    np.testing.assert_allclose(rep.grad, (1 - 0.3) * d_base + 0.4 * d_v, rtol=1e-14, atol=1e-16)


def test_mse_examples():
    assert mse([[1.0, 2.0]], [[1.0, 2.0]])[0] == 0.0
    assert mse([[1.0, 2.0]], [[0.0, 0.0]])[0] == 2.5


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse([[1.0, 2.0]], [[1.0]])


def test_mse_gradient_finite_differences():
    rs = np.random.default_rng(6)
    p, t = rs.normal(size=(4, 3)), rs.normal(size=(4, 3))
    _, g = mse(p, t)
    num = numeric_grad(lambda: mse(p, t)[0], [p])
    assert relative_error([g], num) < 1e-6


def test_regression_vpl_examples():
    # per-sample MSE {1, 3}: population variance 1
    value, _ = regression_vpl([[1.0], [math.sqrt(3.0)]], [[0.0], [0.0]])
    assert value == pytest.approx(1.0, abs=1e-15)
    value, grad = regression_vpl([[1.0, -1.0], [2.0, 0.0]], [[0.0, 0.0], [1.0, 1.0]])
    assert value == 0.0 and not grad.any()


def test_regression_reduces_to_mse():
    rs = np.random.default_rng(7)
    p, t = rs.normal(size=(5, 2)), rs.normal(size=(5, 2))
    base, d = mse(p, t)
    rep = clf_total_regression(p, t, CLFConfig(0.0, 0.0), prev_mse=3.0)
    assert rep.total == base and np.array_equal(rep.grad, d)


def _away_from_kink(rs, base):
    return base * (1.0 + rs.choice([-1.0, 1.0]) * rs.uniform(0.2, 0.8))


@pytest.mark.parametrize("seed", range(20))
def test_loss_gradients_match_finite_differences(seed):
    rs = np.random.default_rng(seed)
    z, y = _random_batch(rs, n=10, k=3)
    base, _ = cel(z, y)
    prev = _away_from_kink(rs, base)
    cfg = CLFConfig(rs.uniform(0, 1), rs.uniform(0, 1))
    cases = [
        (lambda: cel(z, y)[0], cel(z, y)[1]),
        (lambda: vpl(z, y)[0], vpl(z, y)[1]),
        (lambda: clf_total(z, y, cfg, prev).total, clf_total(z, y, cfg, prev).grad),
    ]
    for f, analytic in cases:
        assert relative_error([analytic], numeric_grad(f, [z])) < 1e-4

    p, t = rs.normal(size=(6, 3)), rs.normal(size=(6, 3))
    prev_mse = _away_from_kink(rs, mse(p, t)[0])
    cases = [
        (lambda: regression_vpl(p, t)[0], regression_vpl(p, t)[1]),
        (lambda: clf_total_regression(p, t, cfg, prev_mse).total, clf_total_regression(p, t, cfg, prev_mse).grad),
    ]
    for f, analytic in cases:
        assert relative_error([analytic], numeric_grad(f, [p])) < 1e-4
