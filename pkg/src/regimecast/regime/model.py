"""Types and closed-form quantities for the HDP-HMM family.

Three variants share one state container:

* ``hdp``    - plain HDP-HMM, transition rows pi_j ~ DP(alpha, beta)
* ``sticky`` - rows ~ DP(alpha + kappa, (alpha*beta + kappa*delta_j)/(alpha + kappa))
* ``ds``     - disentangled sticky: w_t ~ Bern(kappa_{z_{t-1}}) decides between
  staying put and a draw from pi_bar_j ~ DP(alpha, beta)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

VARIANTS = ("hdp", "sticky", "ds")


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class NIGPrior:
    """Normal-Inverse-Gamma prior: sigma2 ~ IG(a0, b0), mu | sigma2 ~ N(m0, sigma2/k0)."""

    m0: float = 0.0
    k0: float = 0.01
    a0: float = 2.0
    b0: float = 1.0

    def __post_init__(self):
        if not (self.k0 > 0 and self.b0 > 0):
            raise RegimeError("NIG prior needs k0 > 0 and b0 > 0")
        if not self.a0 > 1:
            raise RegimeError("NIG prior needs a0 > 1 for a finite prior variance")

    @classmethod
    def from_data(cls, obs: np.ndarray) -> "NIGPrior":
        """Weakly informative prior scaled to the series."""
        obs = np.asarray(obs, dtype=float)
        var = float(np.var(obs))
        scale = var if var > 0 else 1.0
        return cls(m0=float(np.mean(obs)), k0=0.01, a0=2.0, b0=0.1 * scale)

    def posterior(self, y: np.ndarray) -> "NIGPrior":
        y = np.asarray(y, dtype=float)
        n = y.size
        if n == 0:
            return self
        ybar = float(y.mean())
        ss = float(((y - ybar) ** 2).sum())
        kn = self.k0 + n
        mn = (self.k0 * self.m0 + n * ybar) / kn
        an = self.a0 + 0.5 * n
        bn = self.b0 + 0.5 * ss + self.k0 * n * (ybar - self.m0) ** 2 / (2.0 * kn)
        return NIGPrior(mn, kn, an, bn)

    def predictive_logpdf(self, y):
        """Student-t prior predictive of one observation."""
        from scipy.stats import t as student_t

        scale = np.sqrt(self.b0 * (1.0 + self.k0) / (self.a0 * self.k0))
        return student_t.logpdf(y, df=2 * self.a0, loc=self.m0, scale=scale)


def _default_rho_grid():
    vals = (0.5, 1.0, 2.0, 5.0, 10.0)
    return np.array([(a, b) for a in vals for b in vals], dtype=float)


@dataclass(frozen=True)
class Priors:
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    rho_grid: np.ndarray = field(default_factory=_default_rho_grid)
    rho_weights: Optional[np.ndarray] = None
    emission_prior: Optional[NIGPrior] = None  # None: scale to data at fit time
    # Beta prior on kappa/(alpha+kappa) for the sticky variant
    sticky_rho_prior: tuple = (10.0, 1.0)

    def __post_init__(self):
        for name in ("gamma_shape", "gamma_rate", "alpha_shape", "alpha_rate"):
            if not getattr(self, name) > 0:
                raise RegimeError(f"{name} must be positive")
        grid = np.atleast_2d(np.asarray(self.rho_grid, dtype=float))
        if grid.size == 0 or grid.shape[1] != 2 or (grid <= 0).any():
            raise RegimeError("rho_grid must be a nonempty list of positive (rho1, rho2) pairs")
        weights = self.rho_weights
        if weights is None:
            weights = np.full(len(grid), 1.0 / len(grid))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(grid),) or (weights < 0).any() or abs(weights.sum() - 1) > 1e-9:
            raise RegimeError("rho_weights must be nonnegative and sum to 1")
        if min(self.sticky_rho_prior) <= 0:
            raise RegimeError("sticky_rho_prior entries must be positive")
        object.__setattr__(self, "rho_grid", grid)
        object.__setattr__(self, "rho_weights", weights)

    def with_data(self, obs) -> "Priors":
        if self.emission_prior is not None:
            return self
        return replace(self, emission_prior=NIGPrior.from_data(obs))


@dataclass(frozen=True)
class RegimePosterior:
    """One sample of the sampler state.

    ``beta`` has K+1 entries, the last being the unallocated remainder.  For the
    sticky and plain variants ``w`` is all zero and ``kappa`` holds the shared
    ratio kappa/(alpha+kappa) repeated per regime (zero for ``hdp``); the
    absolute sticky weight lives in ``sticky_kappa``.
    """

    z: np.ndarray
    w: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    alpha: float
    gamma: float
    rho1: float
    rho2: float
    variant: str = "ds"
    sticky_kappa: float = 0.0
    log_likelihood_trace: tuple = ()
    parent: Optional["RegimePosterior"] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name, dtype in (("z", np.int64), ("w", np.int8), ("beta", float),
                            ("kappa", float), ("mu", float), ("sigma2", float)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "log_likelihood_trace", tuple(self.log_likelihood_trace))
        if self.variant not in VARIANTS:
            raise RegimeError(f"unknown variant {self.variant!r}")

    @property
    def K(self) -> int:
        return int(self.mu.size)

    @property
    def T(self) -> int:
        return int(self.z.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.K)

    def validate(self, tol: float = 1e-12) -> None:
        K = self.K
        if self.beta.shape != (K + 1,) or self.kappa.shape != (K,) or self.sigma2.shape != (K,):
            raise RegimeError("per-regime arrays have inconsistent lengths")
        if (self.beta < 0).any() or abs(self.beta.sum() - 1.0) > tol:
            raise RegimeError(f"beta must be a probability vector (sum={self.beta.sum()!r})")
        if self.z.min(initial=0) < 0 or self.z.max(initial=-1) >= K:
            raise RegimeError("label out of range")
        if (self.counts() == 0).any():
            raise RegimeError("empty regime present")
        if ((self.kappa < 0) | (self.kappa > 1)).any():
            raise RegimeError("kappa outside [0, 1]")
        if not (self.sigma2 > 0).all():
            raise RegimeError("non-positive emission variance")
        if self.w.shape != self.z.shape or (self.T and self.w[0] != 0):
            raise RegimeError("w must match z and start at 0")
        stay = self.w[1:] == 1
        if (self.z[1:][stay] != self.z[:-1][stay]).any():
            raise RegimeError("w_t = 1 but z_t != z_{t-1}")
        for name in ("alpha", "gamma", "rho1", "rho2"):
            if not getattr(self, name) > 0:
                raise RegimeError(f"{name} must be positive")

    def with_trace(self, trace) -> "RegimePosterior":
        return replace(self, log_likelihood_trace=tuple(trace))


def stick_breaking(gamma: float, K: int, rng: np.random.Generator) -> np.ndarray:
    """GEM(gamma) weights truncated after K breaks; entry K is the remainder."""
    if not gamma > 0:
        raise RegimeError("gamma must be positive")
    if K < 1:
        raise RegimeError("K must be at least 1")
    v = rng.beta(1.0, gamma, size=K)
    out = np.empty(K + 1)
    rest = 1.0
    for k in range(K):
        out[k] = v[k] * rest
        rest -= out[k]
    # absorb rounding into the remainder
    out[K] = max(1.0 - out[:K].sum(), 0.0)
    return out


def kl_gaussian(mu_i: float, mu_j: float, sigma2: float) -> float:
    """KL between two Gaussians sharing variance sigma2."""
    if not sigma2 > 0:
        raise RegimeError("sigma2 must be positive")
    return (mu_i - mu_j) ** 2 / (2.0 * sigma2)


def expected_self_transition(variant: str, params: dict) -> float:
    def need(*names):
        missing = [n for n in names if n not in params]
        if missing:
            raise RegimeError(f"{variant} needs {', '.join(missing)}")
        return [float(params[n]) for n in names]

    if variant == "hdp":
        (b,) = need("beta_j")
        return b
    if variant == "sticky":
        b, a, k = need("beta_j", "alpha", "kappa")
        return (a * b + k) / (a + k)
    if variant == "ds":
        b, r1, r2 = need("beta_j", "rho1", "rho2")
        m = r1 / (r1 + r2)
        return m + (1.0 - m) * b
    raise RegimeError(f"unknown variant {variant!r}")


def prior_self_transition_mc(variant: str, params: dict, j: int = 0, draws: int = 100_000,
                             truncation: int = 50, rng: Optional[np.random.Generator] = None,
                             beta: Optional[np.ndarray] = None):
    """Monte Carlo mean of pi_jj under the variant's prior.

    ``beta`` defaults to one stick-breaking draw with ``params['gamma']``.
    Returns (mean, standard error, beta) so callers can form the closed form.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if beta is None:
        beta = stick_breaking(float(params.get("gamma", 1.0)), truncation, rng)
    beta = np.asarray(beta, dtype=float)
    alpha = float(params.get("alpha", 1.0))
    conc = alpha * beta
    if variant == "sticky":
        conc = conc.copy()
        conc[j] += float(params["kappa"])
    rows = rng.dirichlet(np.maximum(conc, 1e-300), size=draws)
    pjj = rows[:, j]
    if variant == "ds":
        kappa = rng.beta(float(params["rho1"]), float(params["rho2"]), size=draws)
        pjj = kappa + (1.0 - kappa) * pjj
    elif variant not in ("hdp", "sticky"):
        raise RegimeError(f"unknown variant {variant!r}")
    return float(pjj.mean()), float(pjj.std(ddof=1) / np.sqrt(draws)), beta
