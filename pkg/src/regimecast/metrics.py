"""Point, interval and distributional scores plus forecast comparison tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .mixture import MixtureForecast

MAPE_EPS = 1.0  # EUR/MWh guard against zero and negative prices


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorReport:
    mae: float
    rmse: float
    mape: float  # percent
    smape: float  # fraction in [0, 2]

    def as_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "mape": self.mape, "smape": self.smape}


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    degenerate: bool = False

    __test__ = False  # not a pytest class


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise MetricError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise MetricError("need at least one value")
    return y, y_hat


def point_errors(y, y_hat, eps: float = MAPE_EPS) -> ErrorReport:
    y, y_hat = _pair(y, y_hat)
    e = y - y_hat
    ae = np.abs(e)
    return ErrorReport(
        mae=float(ae.mean()),
        rmse=float(np.sqrt((e ** 2).mean())),
        mape=float(100.0 * (ae / np.maximum(np.abs(y), eps)).mean()),
        smape=float((2.0 * ae / (np.abs(y) + np.abs(y_hat) + eps)).mean()),
    )


def interval_scores(y, lower, upper) -> dict:
    y, lower = _pair(y, lower)
    _, upper = _pair(y, upper)
    if (lower > upper).any():
        raise MetricError("lower bound above upper bound")
    inside = (y >= lower) & (y <= upper)
    return {"picp": float(inside.mean()), "mpiw": float((upper - lower).mean())}


def crps_gaussian(mu, sigma, y):
    mu, sigma, y = np.broadcast_arrays(np.asarray(mu, float), np.asarray(sigma, float),
                                       np.asarray(y, float))
    if (sigma <= 0).any():
        raise MetricError("sigma must be positive")
    z = (y - mu) / sigma
    out = sigma * (z * (2 * ndtr(z) - 1) + 2 * stats.norm.pdf(z) - 1 / np.sqrt(np.pi))
    return out if out.ndim else float(out)


def crps_mixture(mix: MixtureForecast, y, n_samples: int = 100_000, seed: int = 0):
    """Sample-pair estimate E|X - y| - E|X - X'|/2 per hour."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != mix.hours:
        raise MetricError("one observation per hour expected")
    rng = np.random.default_rng(seed)
    x = mix.sample(n_samples, rng)
    x2 = mix.sample(n_samples, rng)
    out = np.abs(x - y).mean(axis=0) - 0.5 * np.abs(x - x2).mean(axis=0)
    return out


def dm_test(e1, e2, h: int = 24, loss: str = "squared") -> TestResult:
    """Diebold-Mariano test; negative statistic favours the first forecast."""
    e1, e2 = _pair(e1, e2)
    n = e1.size
    if n <= 10:
        raise MetricError("need more than 10 paired errors")
    if h < 1:
        raise MetricError("horizon must be at least 1")
    if loss == "squared":
        d = e1 ** 2 - e2 ** 2
    elif loss == "absolute":
        d = np.abs(e1) - np.abs(e2)
    else:
        raise MetricError(f"unknown loss {loss!r}")
    dc = d - d.mean()
    lrv = dc @ dc / n
    for k in range(1, min(h - 1, n - 1) + 1):
        lrv += 2.0 * (1.0 - k / h) * (dc[k:] @ dc[:-k]) / n
    scale = max(1.0, float(np.abs(d).max()))
    if lrv <= 1e-14 * scale * scale:
        return TestResult(0.0, 1.0, degenerate=True)
    stat = float(d.mean() / np.sqrt(lrv / n))
    return TestResult(stat, float(2.0 * stats.norm.sf(abs(stat))))


def average_ranks(values, minimize=True) -> np.ndarray:
    """Within-row ranks, 1 = best, ties receive their average rank."""
    values = np.asarray(values, dtype=float)
    minimize = np.broadcast_to(np.asarray(minimize, dtype=bool), (values.shape[1],))
    signed = np.where(minimize, values, -values)
    return np.apply_along_axis(stats.rankdata, 1, signed)


def friedman_nemenyi(values, minimize=True):
    """Friedman chi-square over blocks (rows) and Nemenyi pairwise p-values.

    ``minimize`` may be a single flag or one per column; a column whose flag is
    False is ranked with larger values as better.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
        raise MetricError("need at least 2 blocks and 2 treatments")
    b, k = values.shape
    R = average_ranks(values, minimize)
    rbar = R.mean(axis=0)
    ss = b * ((rbar - (k + 1) / 2.0) ** 2).sum()
    # tie correction
    ties = 0.0
    for row in R:
        _, counts = np.unique(row, return_counts=True)
        ties += (counts ** 3 - counts).sum()
    denom = 1.0 - ties / (b * (k ** 3 - k))
    if denom <= 0:
        friedman = TestResult(0.0, 1.0, degenerate=True)
    else:
        chi2 = 12.0 * ss / (k * (k + 1)) / denom
        friedman = TestResult(float(chi2), float(stats.chi2.sf(chi2, k - 1)))
    se = np.sqrt(k * (k + 1) / (6.0 * b))
    q = np.abs(rbar[:, None] - rbar[None, :]) / se * np.sqrt(2.0)
    p = stats.studentized_range.sf(q, k, np.inf)
    p = np.clip(np.where(q == 0, 1.0, p), 0.0, 1.0)
    return {"friedman": friedman, "nemenyi": p, "mean_ranks": rbar}
