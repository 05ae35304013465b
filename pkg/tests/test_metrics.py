import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from regimecast.metrics import (
    MetricError,
    crps_gaussian,
    crps_mixture,
    dm_test,
    friedman_nemenyi,
    interval_scores,
    point_errors,
)
from regimecast.mixture import GaussianForecast, aggregate

finite = st.floats(-500, 500, allow_nan=False)


def crps_by_quadrature(mu, sigma, y):
    f = lambda x: stats.norm.cdf(x, mu, sigma) ** 2  # noqa: E731
    g = lambda x: (stats.norm.cdf(x, mu, sigma) - 1.0) ** 2  # noqa: E731
    a, _ = integrate.quad(f, -np.inf, y, epsabs=1e-12, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(g, y, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)
    return a + b


def test_point_errors_perfect():
    r = point_errors([1.0, -3.0, 50.0], [1.0, -3.0, 50.0])
    assert r.as_dict() == {"mae": 0.0, "rmse": 0.0, "mape": 0.0, "smape": 0.0}


def test_point_errors_hand_example():
    r = point_errors([100, 200], [110, 180])
    assert r.mae == pytest.approx(15.0)
    assert r.rmse == pytest.approx(np.sqrt(250.0))
    assert r.mape == pytest.approx(10.0)


def test_smape_fraction():
    assert point_errors([100.0], [300.0], eps=0.0).smape == pytest.approx(1.0)
    # with the default guard the denominator grows by one unit
    assert point_errors([100.0], [300.0]).smape == pytest.approx(400.0 / 401.0)


def test_mape_guard_near_zero_prices():
    r = point_errors([0.0, -0.5], [2.0, 0.5])
    assert r.mape == pytest.approx(100.0 * (2.0 / 1.0 + 1.0 / 1.0) / 2)


def test_length_mismatch():
    with pytest.raises(MetricError):
        point_errors([1.0, 2.0], [1.0])


@given(arrays(float, st.integers(1, 50), elements=finite), st.data())
def test_error_invariants(y, data):
    y_hat = data.draw(arrays(float, y.size, elements=finite))
    r = point_errors(y, y_hat)
    assert r.rmse >= r.mae - 1e-9
    assert r.rmse >= abs((y - y_hat).mean()) - 1e-9
    assert 0 <= r.smape <= 2
    assert r.mape >= 0


def test_interval_examples():
    assert interval_scores([0, 10], [-1, 0], [1, 5]) == {"picp": 0.5, "mpiw": 3.5}
    assert interval_scores([3.0, 4.0], [3.0, 4.0], [3.0, 4.0]) == {"picp": 1.0, "mpiw": 0.0}
    with pytest.raises(MetricError):
        interval_scores([0.0], [1.0], [0.0])


def test_crps_standard_normal_at_zero():
    expected = 2 * stats.norm.pdf(0) - 1 / np.sqrt(np.pi)
    assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(expected, abs=1e-12)
    assert abs(crps_by_quadrature(0.0, 1.0, 0.0) - 0.23370) < 1e-5


def test_crps_point_mass_limit():
    assert crps_gaussian(5.0, 1e-9, 5.0) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_crps_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        mu, sigma, y = rng.normal(0, 20), rng.uniform(0.1, 30), rng.normal(0, 40)
        assert abs(crps_gaussian(mu, sigma, y) - crps_by_quadrature(mu, sigma, y)) < 1e-6


def test_crps_rejects_bad_sigma():
    with pytest.raises(MetricError):
        crps_gaussian(0.0, 0.0, 1.0)


def test_crps_mixture_single_component():
    mix = aggregate([1.0], [GaussianForecast([2.0, -1.0], [4.0, 0.25])])
    y = np.array([3.0, -1.5])
    est = crps_mixture(mix, y, n_samples=100_000, seed=1)
    exact = crps_gaussian(mix.means[0], np.sqrt(mix.variances[0]), y)
    # standard error of the estimator measured from independent replicates
    reps = np.array([crps_mixture(mix, y, n_samples=10_000, seed=s) for s in range(30)])
    se = reps.std(axis=0, ddof=1) / np.sqrt(10)
    assert (np.abs(est - exact) < 3 * se).all()


def test_dm_identical_is_degenerate():
    e = np.random.default_rng(0).normal(size=100)
    r = dm_test(e, e)
    assert r.statistic == 0.0 and r.p_value == 1.0 and r.degenerate


def test_dm_dominance():
    rng = np.random.default_rng(0)
    e1 = np.abs(rng.normal(size=500))
    r = dm_test(e1, e1 + 0.5)
    assert r.statistic < -5 and r.p_value < 0.01


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
@settings(max_examples=30, deadline=None)
def test_dm_antisymmetric(seed, h):
    rng = np.random.default_rng(seed)
    e1, e2 = rng.normal(size=80), rng.normal(size=80)
    a, b = dm_test(e1, e2, h), dm_test(e2, e1, h)
    assert a.statistic == pytest.approx(-b.statistic, abs=1e-12)
    assert a.p_value == pytest.approx(b.p_value)
    assert 0 <= a.p_value <= 1


def test_dm_lag_weights_by_hand():
    rng = np.random.default_rng(3)
    e1, e2 = rng.normal(size=40), rng.normal(size=40)
    d = e1 ** 2 - e2 ** 2
    n, h = d.size, 3
    dc = d - d.mean()
    gamma = [np.sum(dc[k:] * dc[: n - k]) / n for k in range(h)]
    lrv = gamma[0] + 2 * (1 - 1 / h) * gamma[1] + 2 * (1 - 2 / h) * gamma[2]
    assert dm_test(e1, e2, h).statistic == pytest.approx(d.mean() / np.sqrt(lrv / n))


def test_dm_short_series_rejected():
    with pytest.raises(MetricError):
        dm_test(np.ones(10), np.zeros(10))


def test_friedman_dominant_model():
    rng = np.random.default_rng(0)
    vals = rng.uniform(1, 2, (20, 3))
    vals[:, 0] = 0.5  # always the smallest error
    out = friedman_nemenyi(vals)
    assert out["friedman"].p_value < 0.01
    assert out["nemenyi"][0, 1] < 0.01 and out["nemenyi"][0, 2] < 0.01


def test_friedman_rank_sum_oracle():
    rng = np.random.default_rng(5)
    vals = rng.normal(size=(12, 4))
    b, k = vals.shape
    ranks = np.argsort(np.argsort(vals, axis=1), axis=1) + 1.0  # no ties in continuous data
    Rj = ranks.sum(axis=0)
    chi2 = 12.0 / (b * k * (k + 1)) * (Rj ** 2).sum() - 3 * b * (k + 1)
    out = friedman_nemenyi(vals)
    assert out["friedman"].statistic == pytest.approx(chi2)
    assert out["friedman"].statistic == pytest.approx(stats.friedmanchisquare(*vals.T).statistic)
    q = abs(Rj[0] - Rj[1]) / b / np.sqrt(k * (k + 1) / (12.0 * b))
    assert out["nemenyi"][0, 1] == pytest.approx(stats.studentized_range.sf(q, k, np.inf))


def test_friedman_identical_columns():
    vals = np.tile(np.arange(10.0)[:, None], (1, 3))
    out = friedman_nemenyi(vals)
    assert out["friedman"].p_value == pytest.approx(1.0)
    assert (out["nemenyi"] == 1.0).all()


def test_friedman_row_permutation_invariant():
    rng = np.random.default_rng(2)
    vals = rng.normal(size=(15, 3))
    a = friedman_nemenyi(vals)
    b = friedman_nemenyi(vals[rng.permutation(15)])
    assert a["friedman"].statistic == pytest.approx(b["friedman"].statistic)
    np.testing.assert_allclose(a["nemenyi"], b["nemenyi"])


def test_friedman_direction_flags():
    vals = np.array([[1.0, 2.0], [1.0, 3.0], [2.0, 5.0]])
    lo = friedman_nemenyi(vals, minimize=True)["mean_ranks"]
    hi = friedman_nemenyi(vals, minimize=False)["mean_ranks"]
    np.testing.assert_allclose(lo, [1, 2])
    np.testing.assert_allclose(hi, [2, 1])
