import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from survboost.losses import (
    LossKind,
    ResidualContext,
    cox_negative_gradient,
    cox_negative_log_pl,
    gehan_loss,
    gehan_loss_bruteforce,
    gehan_negative_gradient,
    gehan_negative_gradient_fast,
    ipw_l2_loss,
    ipw_l2_negative_gradient,
    loss_value,
    negative_gradient,
    plain_l2_loss,
    plain_l2_negative_gradient,
)


# ---- independent oracles (plain loops) -----------------------------------


def gehan_loss_loops(e, delta):
    n = len(e)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if e[i] <= e[j]:
                total += delta[i] * (e[i] - e[j])
    return -total / n**2


def gehan_gradient_loops(e, delta):
    n = len(e)
    z = []
    for k in range(n):
        g1 = delta[k] * sum(1 for j in range(n) if e[k] <= e[j])
        g2 = sum(delta[j] for j in range(n) if e[j] <= e[k])
        z.append(-(g1 - g2) / n)
    return np.array(z)


def cox_loss_loops(f, time, delta):
    n = len(f)
    total = 0.0
    for i in range(n):
        if delta[i]:
            risk = sum(math.exp(f[j]) for j in range(n) if time[j] >= time[i])
            total += f[i] - math.log(risk)
    return -total / n


def random_instance(rng, n, ties=False, censor=0.4):
    e = rng.normal(size=n)
    if ties:
        e = np.round(e * 2) / 2
    delta = (rng.random(n) > censor).astype(float)
    return e, delta


# ---- Gehan ----------------------------------------------------------------


def test_gehan_loss_examples():
    assert gehan_loss(ResidualContext([0, 1, 2], [1, 1, 1])) == pytest.approx(4 / 9, abs=1e-15)
    assert gehan_loss_loops([0, 1, 2], [1, 1, 1]) == pytest.approx(4 / 9)
    assert gehan_loss(ResidualContext([0, 1], [1, 0])) == pytest.approx(0.25, abs=1e-15)
    rng = np.random.default_rng(0)
    assert gehan_loss(ResidualContext(rng.normal(size=9), np.zeros(9))) == 0.0


def test_gehan_gradient_examples():
    z = gehan_negative_gradient(ResidualContext([0, 1, 2], [1, 1, 1]))
    assert_allclose(z, [-2 / 3, 0, 2 / 3], atol=1e-15)
    assert_allclose(gehan_gradient_loops([0, 1, 2], [1, 1, 1]), [-2 / 3, 0, 2 / 3])
    z = gehan_negative_gradient(ResidualContext([0, 1], [1, 0]))
    assert_allclose(z, [-0.5, 0.5], atol=1e-15)
    z = gehan_negative_gradient_fast(ResidualContext([3.0, -1.0, 2.0], [0, 0, 0]))
    assert np.all(z == 0)


@pytest.mark.parametrize("seed", range(20))
def test_gehan_loss_matches_loops(seed):
    rng = np.random.default_rng(seed)
    e, delta = random_instance(rng, int(rng.integers(2, 30)), ties=seed % 2 == 0)
    ctx = ResidualContext(e, delta)
    expected = gehan_loss_loops(e, delta)
    assert gehan_loss(ctx) == pytest.approx(expected, rel=1e-12, abs=1e-14)
    assert gehan_loss_bruteforce(ctx) == pytest.approx(expected, rel=1e-12, abs=1e-14)
    assert_allclose(gehan_negative_gradient(ctx), gehan_gradient_loops(e, delta), atol=1e-14)


@pytest.mark.parametrize(
    "e, delta",
    [([0.0, 0.0, 0.0], [1, 1, 0]), ([0.3, -0.2], [1, 1]), ([5.0, 5.0], [0, 1]), ([1.0, 2.0], [0, 0])],
)
def test_gehan_fast_small_cases(e, delta):
    ctx = ResidualContext(e, delta)
    assert_allclose(gehan_negative_gradient_fast(ctx), gehan_gradient_loops(e, delta), rtol=0, atol=1e-12)


def test_gehan_fast_random_with_ties():
    rng = np.random.default_rng(11)
    e = rng.normal(size=200)
    e[rng.integers(0, 200, 60)] = e[rng.integers(0, 200, 60)]  # inject duplicates
    delta = (rng.random(200) > 0.3).astype(float)
    ctx = ResidualContext(e, delta)
    assert_allclose(gehan_negative_gradient_fast(ctx), gehan_gradient_loops(e, delta), rtol=0, atol=1e-12)


def test_gehan_gradient_is_scaled_derivative_wrt_residuals():
    # with no ties the loss is linear near e, so central differences are exact up to rounding
    rng = np.random.default_rng(5)
    e, delta = random_instance(rng, 20)
    ctx = ResidualContext(e, delta)
    h = 1e-7
    fd = np.empty(20)
    for k in range(20):
        ep, em = e.copy(), e.copy()
        ep[k] += h
        em[k] -= h
        fd[k] = (gehan_loss(ResidualContext(ep, delta)) - gehan_loss(ResidualContext(em, delta))) / (2 * h)
    assert_allclose(fd, gehan_negative_gradient(ctx) / 20, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("c", [-3.0, 0.5, 100.0])
def test_gehan_translation_invariance(c):
    rng = np.random.default_rng(2)
    e, delta = random_instance(rng, 25, ties=True)
    base = gehan_loss(ResidualContext(e, delta))
    assert gehan_loss(ResidualContext(e + c, delta)) == pytest.approx(base, rel=1e-12, abs=1e-12)


# ---- Cox --------------------------------------------------------------------


def test_cox_examples():
    assert cox_negative_log_pl([0.0, 0.0], [1.0, 2.0], [1, 1]) == pytest.approx(math.log(2) / 2, abs=1e-15)
    assert_allclose(cox_negative_gradient([0.0, 0.0], [1.0, 2.0], [1, 1]), [0.5, -0.5], atol=1e-15)
    assert cox_negative_log_pl([0.3, 1.0, -2.0], [1, 2, 3], [0, 0, 0]) == 0.0
    assert np.all(cox_negative_gradient([0.3, 1.0, -2.0], [1, 2, 3], [0, 0, 0]) == 0)


@pytest.mark.parametrize("seed", range(10))
def test_cox_loss_matches_loops_with_tied_times(seed):
    rng = np.random.default_rng(seed)
    n = 15
    time = rng.integers(1, 6, n).astype(float)
    delta = rng.integers(0, 2, n).astype(float)
    f = rng.normal(size=n)
    assert cox_negative_log_pl(f, time, delta) == pytest.approx(cox_loss_loops(f, time, delta), rel=1e-12)


def test_cox_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    n = 20
    time = rng.exponential(size=n)
    delta = (rng.random(n) > 0.3).astype(float)
    f = rng.normal(size=n)
    h = 1e-6
    fd = np.empty(n)
    for k in range(n):
        fp, fm = f.copy(), f.copy()
        fp[k] += h
        fm[k] -= h
        fd[k] = (cox_negative_log_pl(fp, time, delta) - cox_negative_log_pl(fm, time, delta)) / (2 * h)
    assert_allclose(cox_negative_gradient(f, time, delta), -n * fd, rtol=1e-6, atol=1e-8)


def test_cox_translation_invariance_and_overflow_guard():
    rng = np.random.default_rng(8)
    time, f = rng.exponential(size=30), rng.normal(size=30)
    delta = rng.integers(0, 2, 30)
    base = cox_negative_log_pl(f, time, delta)
    assert cox_negative_log_pl(f + 5, time, delta) == pytest.approx(base, abs=1e-12)
    big = cox_negative_log_pl(f + 800, time, delta)
    assert big == pytest.approx(base, abs=1e-9)
    assert np.all(np.isfinite(cox_negative_gradient(f + 800, time, delta)))


def test_cox_convexity_spot_check():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n = 12
        time, delta = rng.exponential(size=n), rng.integers(0, 2, n)
        f1, f2 = rng.normal(size=n) * 2, rng.normal(size=n) * 2
        lam = rng.uniform(0.01, 0.99)
        lhs = cox_negative_log_pl(lam * f1 + (1 - lam) * f2, time, delta)
        rhs = lam * cox_negative_log_pl(f1, time, delta) + (1 - lam) * cox_negative_log_pl(f2, time, delta)
        assert lhs <= rhs + 1e-10


# ---- squared error ------------------------------------------------------------


def test_plain_l2_examples():
    ctx = ResidualContext([1.0, -1.0], [1, 1])
    assert plain_l2_loss(ctx) == 0.5
    # pseudo-response convention: -n * dL/df, i.e. the residuals themselves
    assert_allclose(plain_l2_negative_gradient(ctx), [1.0, -1.0])
    zero = ResidualContext(np.zeros(4), np.ones(4))
    assert plain_l2_loss(zero) == 0 and np.all(plain_l2_negative_gradient(zero) == 0)


def test_plain_l2_homogeneity():
    rng = np.random.default_rng(4)
    e = rng.normal(size=10)
    a, b = ResidualContext(e, np.ones(10)), ResidualContext(3 * e, np.ones(10))
    assert plain_l2_loss(b) == pytest.approx(9 * plain_l2_loss(a))
    assert_allclose(plain_l2_negative_gradient(b), 3 * plain_l2_negative_gradient(a))


def test_ipw_examples():
    ctx = ResidualContext([1.0, 7.0], [1, 0], weights=[2.0, 0.0])
    assert ipw_l2_loss(ctx) == pytest.approx(2 * 1.0**2 / (2 * 2))
    assert_allclose(ipw_l2_negative_gradient(ctx), [2.0, 0.0])
    rng = np.random.default_rng(0)
    e = rng.normal(size=6)
    ones = ResidualContext(e, np.ones(6), np.ones(6))
    assert ipw_l2_loss(ones) == plain_l2_loss(ones)
    assert_allclose(ipw_l2_negative_gradient(ones), plain_l2_negative_gradient(ones))
    zero = ResidualContext(np.zeros(3), [1, 0, 1], [1.5, 0, 2.0])
    assert ipw_l2_loss(zero) == 0 and np.all(ipw_l2_negative_gradient(zero) == 0)


def test_residual_context_weight_invariants():
    with pytest.raises(ValueError):
        ResidualContext([0.0, 1.0], [1, 0], weights=[1.0, 0.5])
    with pytest.raises(ValueError):
        ResidualContext([0.0, 1.0], [1, 1], weights=[-1.0, 1.0])
    with pytest.raises(ValueError):
        ResidualContext([np.nan, 1.0], [1, 1])


@pytest.mark.parametrize("kind", list(LossKind))
def test_dispatch_gradient_is_minus_n_times_derivative(kind):
    rng = np.random.default_rng(21)
    n = 15
    time = rng.exponential(size=n) + 0.05
    status = (rng.random(n) > 0.3).astype(float)
    weights = np.where(status == 1, rng.uniform(1, 3, n), 0.0) if kind is LossKind.IPW_L2 else None
    y, f = np.log(time), rng.normal(size=n) * 0.3
    z = negative_gradient(kind, f, y, time, status, weights)
    h = 1e-7
    fd = np.empty(n)
    for k in range(n):
        fp, fm = f.copy(), f.copy()
        fp[k] += h
        fm[k] -= h
        fd[k] = (loss_value(kind, fp, y, time, status, weights)
                 - loss_value(kind, fm, y, time, status, weights)) / (2 * h)
    assert_allclose(z, -n * fd, rtol=1e-5, atol=1e-7)
    if kind in (LossKind.GEHAN, LossKind.COXPH):
        assert abs(z.sum()) < 1e-12
