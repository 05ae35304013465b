"""Regime-weighted Gaussian mixture forecasts and their predictive intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri


class MixtureError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianForecast:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).ravel()
        v = np.asarray(self.var, dtype=float).ravel()
        if m.shape != v.shape:
            raise MixtureError("mean and variance must have the same length")
        if not (v > 0).all():
            raise MixtureError("variances must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "var", v)


@dataclass(frozen=True)
class MixtureForecast:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, H)
    variances: np.ndarray  # (K, H)
    agg_mean: np.ndarray
    agg_var: np.ndarray

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def hours(self) -> int:
        return self.agg_mean.size

    def hour(self, h: int) -> "MixtureForecast":
        return MixtureForecast(self.weights, self.means[:, h:h + 1], self.variances[:, h:h + 1],
                               self.agg_mean[h:h + 1], self.agg_var[h:h + 1])

    def cdf(self, x) -> np.ndarray:
        """Mixture CDF per hour; ``x`` has shape (H,) or (n, H)."""
        x = np.asarray(x, dtype=float)
        sd = np.sqrt(self.variances)
        z = (x[..., None, :] - self.means) / sd
        return np.einsum("k,...kh->...h", self.weights, ndtr(z))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, H) draws; the component is drawn independently per hour."""
        comp = rng.choice(self.K, size=(n, self.hours), p=self.weights)
        h = np.arange(self.hours)
        mu = self.means[comp, h]
        sd = np.sqrt(self.variances[comp, h])
        return mu + sd * rng.standard_normal((n, self.hours))


def _moments(w, means, variances):
    mean = w @ means
    var = w @ (variances + (means - mean) ** 2)
    return mean, var


def aggregate(weights, forecasts: Sequence[GaussianForecast]) -> MixtureForecast:
    w = np.asarray(weights, dtype=float).ravel()
    if len(forecasts) != w.size or w.size == 0:
        raise MixtureError(f"{w.size} weights for {len(forecasts)} forecasts")
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise MixtureError("weights must lie on the simplex")
    means = np.vstack([f.mean for f in forecasts])
    variances = np.vstack([f.var for f in forecasts])
    mean, var = _moments(w, means, variances)
    return MixtureForecast(w, means, variances, mean, var)


def check_consistent(mix: MixtureForecast, tol: float = 1e-12) -> None:
    mean, var = _moments(mix.weights, mix.means, mix.variances)
    scale = max(1.0, float(np.abs(mean).max()), float(var.max()))
    if np.abs(mean - mix.agg_mean).max() > tol * scale or np.abs(var - mix.agg_var).max() > tol * scale:
        raise MixtureError("aggregate fields disagree with the components")


def quantile(mix: MixtureForecast, q: float, tol: float = 1e-8) -> np.ndarray:
    """Per-hour q-quantile of the mixture by bisection on its CDF."""
    if not 0 < q < 1:
        raise MixtureError("quantile level must lie in (0, 1)")
    sd = np.sqrt(mix.variances)
    z = ndtri(q)
    # every component quantile brackets the mixture quantile
    lo = (mix.means + z * sd).min(axis=0) - tol
    hi = (mix.means + z * sd).max(axis=0) + tol
    for _ in range(200):
        if np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        below = mix.cdf(mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def interval(mix: MixtureForecast, coverage: float = 0.8, gaussian: bool = False):
    """Central interval holding ``coverage`` mass; returns (lower, upper) per hour."""
    if not 0 < coverage < 1:
        raise MixtureError("coverage must lie in (0, 1)")
    a, b = (1 - coverage) / 2, (1 + coverage) / 2
    if gaussian:
        sd = np.sqrt(mix.agg_var)
        return mix.agg_mean + ndtri(a) * sd, mix.agg_mean + ndtri(b) * sd
    return quantile(mix, a), quantile(mix, b)
