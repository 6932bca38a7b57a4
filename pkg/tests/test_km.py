import numpy as np
import pytest
from numpy.testing import assert_allclose

from survboost.km import (
    KaplanMeierCurve,
    UnboundedWeightError,
    censoring_weights,
    fit_censoring_km,
    ipw_weights,
)


def brute_force_censoring_survival(time, status, t):
    """Product over censoring times <= t of (1 - 1/at_risk); requires distinct times."""
    s = 1.0
    for u, d in sorted(zip(time, status)):
        if u > t:
            break
        if d == 0:
            at_risk = sum(1 for v in time if v >= u)
            s *= 1 - 1 / at_risk
    return s


def test_no_censoring_is_flat():
    curve = fit_censoring_km([1.0, 2.0, 3.0], [1, 1, 1])
    assert curve.jump_times.size == 0
    assert_allclose(curve([0.5, 1.0, 10.0]), 1.0)
    assert_allclose(ipw_weights([1.0, 2.0, 3.0], [1, 1, 1], curve), 1.0)


def test_two_point_example():
    curve = fit_censoring_km([1.0, 2.0], [0, 1])
    assert_allclose(curve([0.5, 0.999, 1.0, 1.5, 2.0, 5.0]), [1, 1, 0.5, 0.5, 0.5, 0.5])
    assert_allclose(ipw_weights([1.0, 2.0], [0, 1], curve), [0.0, 2.0])


def test_all_censored_example():
    curve = fit_censoring_km([1.0, 2.0, 3.0], [0, 0, 0])
    assert_allclose(curve.jump_times, [1, 2, 3])
    assert_allclose(curve.values, [2 / 3, 1 / 3, 0.0], atol=1e-15)


def test_left_limit_lookup():
    curve = KaplanMeierCurve([1.0, 2.0], [0.8, 0.4])
    assert_allclose(curve.left_limit([1.0, 1.5, 2.0, 2.5]), [1.0, 0.8, 0.8, 0.4])
    assert_allclose(curve([1.0, 1.5, 2.0, 2.5]), [0.8, 0.8, 0.4, 0.4])


def test_event_tied_with_censoring_stays_at_risk():
    # at t=1 one event and one censoring among 3 at risk: G drops by 1/3, not 1/2
    curve = fit_censoring_km([1.0, 1.0, 2.0], [1, 0, 1])
    assert_allclose(curve(1.0), 2 / 3)


def test_unbounded_weight_raises():
    curve = fit_censoring_km([1.0, 2.0], [0, 0])  # all censoring mass removed by t=2
    with pytest.raises(UnboundedWeightError, match="unbounded IPW weight"):
        ipw_weights([1.0, 3.0], [1, 1], curve)


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force_product(seed):
    rng = np.random.default_rng(seed)
    n = 25
    time = rng.permutation(np.arange(1, n + 1)) + rng.random(n) * 0.5
    status = rng.integers(0, 2, n)
    curve = fit_censoring_km(time, status)
    grid = np.concatenate([time, time + 1e-9, [0.1, 100.0]])
    expected = [brute_force_censoring_survival(time, status, t) for t in grid]
    assert_allclose(curve(grid), expected, rtol=0, atol=1e-12)


def test_random_curves_monotone_and_in_range():
    rng = np.random.default_rng(7)
    for _ in range(500):
        n = int(rng.integers(2, 40))
        time = np.round(rng.exponential(size=n) * 3, 1) + 0.1
        status = rng.integers(0, 2, n)
        curve = fit_censoring_km(time, status)
        assert np.all(np.diff(curve.values) <= 0)
        assert np.all((curve.values >= 0) & (curve.values <= 1))
        assert np.all(np.diff(curve.jump_times) > 0)


def test_weights_zero_for_censored_and_at_least_one_for_events():
    rng = np.random.default_rng(9)
    time = rng.exponential(size=50) + 0.01
    status = rng.integers(0, 2, 50)
    status[np.argmax(time)] = 0
    w = censoring_weights(time, status)
    assert np.all(w[status == 0] == 0)
    assert np.all(w[status == 1] >= 1)
    capped = censoring_weights(time, status, cap=1.5)
    assert capped.max() <= 1.5


def test_curve_validation():
    with pytest.raises(ValueError):
        KaplanMeierCurve([2.0, 1.0], [0.5, 0.2])
    with pytest.raises(ValueError):
        KaplanMeierCurve([1.0, 2.0], [0.5, 0.7])
