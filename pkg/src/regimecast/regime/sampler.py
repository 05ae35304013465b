"""Direct-assignment Gibbs sampler for the HDP-HMM variants."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import betaln, gammaln, xlogy

from . import _kernel
from .model import VARIANTS, NIGPrior, Priors, RegimeError, RegimePosterior, stick_breaking

_VARIANT_CODE = {"hdp": 0, "sticky": 1, "ds": 2}
_BETA_FLOOR = 1e-300


@dataclass(frozen=True)
class SegmentConfig:
    sweeps: int = 1500
    burn_in: int = 500
    seed: int = 0
    variant: str = "ds"
    k_max: int = 50
    check_invariants: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise RegimeError(f"unknown variant {self.variant!r}")
        if not (self.sweeps > self.burn_in >= 0):
            raise RegimeError("need sweeps > burn_in >= 0")
        if self.k_max < 1:
            raise RegimeError("k_max must be at least 1")


@dataclass(frozen=True)
class SegmentationResult:
    posterior: RegimePosterior  # MAP sample
    map_path: np.ndarray
    trace: np.ndarray  # joint log probability per sweep
    map_sweep: int
    config: SegmentConfig
    priors: Priors


# -- conjugate pieces, usable on their own ---------------------------------

def sample_kappa(rho1, rho2, n_persist, n_switch, rng):
    return rng.beta(rho1 + np.asarray(n_persist), rho2 + np.asarray(n_switch))


def sample_emission(y, prior: NIGPrior, rng):
    post = prior.posterior(y)
    sigma2 = post.b0 / rng.gamma(post.a0, 1.0)
    mu = post.m0 + np.sqrt(sigma2 / post.k0) * rng.standard_normal()
    return float(mu), float(sigma2)


def sample_crt(n_customers: int, weight: float, u: np.ndarray) -> int:
    """Table count of a Chinese restaurant with ``n_customers`` and concentration ``weight``."""
    if n_customers <= 0:
        return 0
    i = np.arange(n_customers)
    p = weight / (i + weight)
    p[0] = 1.0
    return int((u[:n_customers] < p).sum())


def sample_dirichlet(shape, rng):
    """Dirichlet draw that tolerates zero shapes and tiny gamma underflow."""
    shape = np.asarray(shape, dtype=float)
    g = np.zeros_like(shape)
    pos = shape > 0
    g[pos] = rng.gamma(shape[pos], 1.0)
    g = np.maximum(g, _BETA_FLOOR * pos)
    return g / g.sum()


def sample_concentration(value, customers, tables, shape, rate, rng, iters=1):
    """Auxiliary-variable update for a DP concentration shared by several restaurants."""
    customers = np.asarray(customers, dtype=float)
    customers = customers[customers > 0]
    if customers.size == 0:
        return float(rng.gamma(shape, 1.0 / rate))
    for _ in range(iters):
        wj = rng.beta(value + 1.0, customers)
        sj = rng.random(customers.size) < customers / (customers + value)
        value = rng.gamma(shape + tables - sj.sum(), 1.0 / (rate - np.log(wj).sum()))
    return float(value)


def sample_top_concentration(gamma, tables, K, shape, rate, rng):
    eta = rng.beta(gamma + 1.0, tables)
    odds = (shape + K - 1.0) / (tables * (rate - np.log(eta)))
    a = shape + K if rng.random() < odds / (1.0 + odds) else shape + K - 1.0
    return float(rng.gamma(a, 1.0 / (rate - np.log(eta))))


# -- helpers ---------------------------------------------------------------

def _transition_counts(z, w, K):
    n = np.zeros((K, K), dtype=np.int64)
    sw = w[1:] == 0
    np.add.at(n, (z[:-1][sw], z[1:][sw]), 1)
    persist = np.bincount(z[:-1][w[1:] == 1], minlength=K)
    return n, persist


def _relabel_by_first_visit(z, *per_state):
    K = per_state[0].size
    order = []
    seen = np.zeros(K, dtype=bool)
    for k in z:
        if not seen[k]:
            seen[k] = True
            order.append(k)
    order = np.array(order, dtype=np.int64)
    inv = np.empty(K, dtype=np.int64)
    inv[order] = np.arange(K)
    return inv[z], [a[order] for a in per_state]


def initial_state(obs, priors: Priors, variant: str = "ds", rng=None) -> RegimePosterior:
    """Single regime holding every observation."""
    rng = rng if rng is not None else np.random.default_rng(0)
    obs = np.asarray(obs, dtype=float)
    T = obs.size
    r1, r2 = 1.0, 1.0
    alpha, gamma = 1.0, 1.0
    var = float(np.var(obs)) if T > 1 else 1.0
    sigma2 = var if var > 0 else priors.emission_prior.b0 / (priors.emission_prior.a0 - 1)
    beta = stick_breaking(gamma, 1, rng)
    w = np.zeros(T, dtype=np.int8)
    if variant == "ds":
        w[1:] = 1
        kappa = np.array([rng.beta(r1, r2)])
        sticky = 0.0
    elif variant == "sticky":
        c, d = priors.sticky_rho_prior
        rho = c / (c + d)
        kappa = np.array([rho])
        sticky = rho / (1.0 - rho) * alpha
    else:
        kappa = np.zeros(1)
        sticky = 0.0
    return RegimePosterior(z=np.zeros(T, dtype=np.int64), w=w, beta=beta, kappa=kappa,
                           mu=np.array([obs.mean()]), sigma2=np.array([sigma2]),
                           alpha=alpha, gamma=gamma, rho1=r1, rho2=r2, variant=variant,
                           sticky_kappa=sticky)


def log_joint(state: RegimePosterior, obs, priors: Priors) -> float:
    """log p(y, z, w, theta, kappa, alpha, gamma | beta) with transition rows integrated out."""
    obs = np.asarray(obs, dtype=float)
    K = state.K
    z, w = state.z, state.w
    n, persist = _transition_counts(z, w, K)
    beta = np.maximum(state.beta[:K], _BETA_FLOOR)
    a = state.alpha
    lp = np.log(beta[z[0]])
    if state.variant == "ds":
        conc = a * beta[None, :] * np.ones((K, 1))
        total = a
    else:
        conc = a * beta[None, :] + state.sticky_kappa * np.eye(K)
        total = a + state.sticky_kappa
    nrow = n.sum(axis=1)
    lp += (gammaln(total) - gammaln(total + nrow)).sum()
    lp += (gammaln(conc + n) - gammaln(conc)).sum()
    if state.variant == "ds":
        kap = state.kappa
        lp += (xlogy(persist, kap) + xlogy(nrow, 1.0 - kap)).sum()
        kc = np.clip(kap, 1e-12, 1 - 1e-12)
        lp += ((state.rho1 - 1) * np.log(kc) + (state.rho2 - 1) * np.log1p(-kc)
               - betaln(state.rho1, state.rho2)).sum()
    s2 = state.sigma2
    lp += (-0.5 * np.log(2 * np.pi * s2[z]) - 0.5 * (obs - state.mu[z]) ** 2 / s2[z]).sum()
    h = priors.emission_prior
    lp += (h.a0 * np.log(h.b0) - gammaln(h.a0) - (h.a0 + 1) * np.log(s2) - h.b0 / s2
           + 0.5 * np.log(h.k0 / (2 * np.pi * s2)) - h.k0 * (state.mu - h.m0) ** 2 / (2 * s2)).sum()
    for val, shp, rt in ((state.alpha, priors.alpha_shape, priors.alpha_rate),
                         (state.gamma, priors.gamma_shape, priors.gamma_rate)):
        lp += shp * np.log(rt) - gammaln(shp) + (shp - 1) * np.log(val) - rt * val
    return float(lp)


# -- the sweep ---------------------------------------------------------------

def gibbs_sweep(state: RegimePosterior, obs, priors: Priors, rng: np.random.Generator,
                k_max: int = 50) -> RegimePosterior:
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 1 or obs.size != state.T:
        raise RegimeError("observation length does not match the state")
    if obs.size < 2:
        raise RegimeError("need at least two observations")
    if not np.isfinite(obs).all():
        raise RegimeError("observations must be finite")
    priors = priors.with_data(obs)
    h = priors.emission_prior
    variant = state.variant
    code = _VARIANT_CODE[variant]
    T = obs.size
    k_max = max(k_max, state.K)

    # step 1: forward scan over (z_t, w_t)
    z = state.z.copy()
    w = state.w.astype(np.int8).copy()
    beta = np.zeros(k_max + 2)
    beta[: state.K + 1] = state.beta
    kappa = np.zeros(k_max + 1)
    kappa[: state.K] = state.kappa
    mu = np.zeros(k_max + 1)
    mu[: state.K] = state.mu
    sig2 = np.ones(k_max + 1)
    sig2[: state.K] = state.sigma2
    u_choice = rng.random(T)
    u_w = rng.random(T)
    kappa_new = rng.beta(state.rho1, state.rho2, size=T)
    b_split = rng.beta(1.0, state.gamma, size=T)
    g_new = rng.gamma(h.a0 + 0.5, 1.0, size=T)
    e_new = rng.standard_normal(T)
    K = _kernel.scan(obs, z, w, state.K, beta, kappa, mu, sig2, state.alpha,
                     state.sticky_kappa, code, k_max, u_choice, u_w, kappa_new, b_split,
                     g_new, e_new, h.m0, h.k0, h.a0, h.b0)
    beta = beta[:K]
    kappa, mu, sig2 = kappa[:K], mu[:K], sig2[:K]
    # canonical labels: order of first visit
    z, (beta, kappa, mu, sig2) = _relabel_by_first_visit(z, beta, kappa, mu, sig2)
    n, persist = _transition_counts(z, w, K)
    nrow = n.sum(axis=1)
    alpha, gamma, rho1, rho2 = state.alpha, state.gamma, state.rho1, state.rho2
    sticky = state.sticky_kappa

    # step 2: persistence
    if variant == "ds":
        kappa = sample_kappa(rho1, rho2, persist, nrow, rng)

    # step 3: global weights via table counts
    tables = np.zeros((K, K), dtype=np.int64)
    for j, k in zip(*np.nonzero(n)):
        weight = alpha * beta[k] + (sticky if (variant != "ds" and j == k) else 0.0)
        tables[j, k] = sample_crt(n[j, k], max(weight, _BETA_FLOOR), rng.random(n[j, k]))
    top = tables.copy()
    overrides = np.zeros(K, dtype=np.int64)
    if variant != "ds" and sticky > 0:
        rho = sticky / (alpha + sticky)
        diag = np.diag(tables)
        p = rho / (rho + beta * (1.0 - rho))
        overrides = rng.binomial(diag, p)
        top[np.arange(K), np.arange(K)] -= overrides
    col = top.sum(axis=0).astype(float)
    col[z[0]] += 1.0  # the initial state is a direct draw from beta
    beta_full = sample_dirichlet(np.append(col, gamma), rng)

    # step 4: emissions
    for k in range(K):
        mu[k], sig2[k] = sample_emission(obs[z == k], h, rng)

    # step 5: concentrations and persistence hyperparameters
    m_total = float(tables.sum())
    if variant == "ds":
        alpha = sample_concentration(alpha, nrow, m_total, priors.alpha_shape,
                                     priors.alpha_rate, rng)
        kc = np.clip(kappa, 1e-12, 1 - 1e-12)
        grid = priors.rho_grid
        ll = ((grid[:, :1] - 1) * np.log(kc)[None, :] + (grid[:, 1:] - 1) * np.log1p(-kc)[None, :]
              ).sum(axis=1) - K * betaln(grid[:, 0], grid[:, 1])
        ll = ll + np.log(np.maximum(priors.rho_weights, 1e-300))
        p = np.exp(ll - ll.max())
        pick = rng.choice(len(grid), p=p / p.sum())
        rho1, rho2 = float(grid[pick, 0]), float(grid[pick, 1])
    elif variant == "sticky":
        total = sample_concentration(alpha + sticky, nrow, m_total, priors.alpha_shape,
                                     priors.alpha_rate, rng)
        c, d = priors.sticky_rho_prior
        o = float(overrides.sum())
        rho = float(rng.beta(o + c, m_total - o + d))
        rho = min(max(rho, 1e-12), 1 - 1e-12)
        alpha, sticky = (1.0 - rho) * total, rho * total
        kappa = np.full(K, rho)
    else:
        alpha = sample_concentration(alpha, nrow, m_total, priors.alpha_shape,
                                     priors.alpha_rate, rng)
        kappa = np.zeros(K)
    m_top = float(col.sum())
    k_top = int((col > 0).sum())
    gamma = sample_top_concentration(gamma, m_top, k_top, priors.gamma_shape,
                                     priors.gamma_rate, rng)
    alpha = max(alpha, 1e-8)
    gamma = max(gamma, 1e-8)

    return RegimePosterior(z=z, w=w, beta=beta_full, kappa=kappa, mu=mu, sigma2=sig2,
                           alpha=alpha, gamma=gamma, rho1=rho1, rho2=rho2, variant=variant,
                           sticky_kappa=sticky, log_likelihood_trace=state.log_likelihood_trace)


def fit_segmentation(obs, config: SegmentConfig = SegmentConfig(),
                     priors: Priors | None = None) -> SegmentationResult:
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 1:
        raise RegimeError("expected a one-dimensional series")
    if obs.size < 10:
        raise RegimeError(f"series of length {obs.size} is too short to segment (need >= 10)")
    if not np.isfinite(obs).all():
        raise RegimeError("observations must be finite")
    priors = (priors or Priors()).with_data(obs)
    rng = np.random.default_rng(config.seed)
    state = initial_state(obs, priors, config.variant, rng)
    trace = np.empty(config.sweeps)
    best, best_lp, best_i = None, -np.inf, -1
    for i in range(config.sweeps):
        state = gibbs_sweep(state, obs, priors, rng, k_max=config.k_max)
        if config.check_invariants:
            state.validate()
        lp = log_joint(state, obs, priors)
        if not np.isfinite(lp):
            raise RegimeError(f"non-finite joint log probability at sweep {i}")
        trace[i] = lp
        if i >= config.burn_in and lp > best_lp:
            best, best_lp, best_i = state, lp, i
    best = replace(best, log_likelihood_trace=tuple(trace))
    return SegmentationResult(posterior=best, map_path=best.z.copy(), trace=trace,
                              map_sweep=best_i, config=config, priors=priors)


def site_conditional(state: RegimePosterior, obs, t: int, priors: Priors,
                     kappa_new: float = 0.5) -> np.ndarray:
    """Normalised candidate probabilities for site t (slots as in the compiled scan)."""
    obs = np.asarray(obs, dtype=float)
    priors = priors.with_data(obs)
    h = priors.emission_prior
    K = state.K
    kmax = K + 1
    z = state.z.copy()
    w = state.w.astype(np.int8).copy()
    n, nrow, _ = _kernel.build_counts(z, w, kmax)
    if t > 0 and w[t] == 0:
        n[z[t - 1], z[t]] -= 1
        nrow[z[t - 1]] -= 1
    if t + 1 < z.size and w[t + 1] == 0:
        n[z[t], z[t + 1]] -= 1
        nrow[z[t]] -= 1
    beta = np.zeros(kmax + 2)
    beta[: K + 1] = state.beta
    logp = np.empty(kmax + 2)
    _kernel.conditional(t, obs, z, K, beta, np.append(state.kappa, 0.0),
                        np.append(state.mu, 0.0), np.append(state.sigma2, 1.0), n, nrow,
                        state.alpha, state.sticky_kappa, _VARIANT_CODE[state.variant], kmax,
                        kappa_new, h.m0, h.k0, h.a0, h.b0, logp)
    logp = logp[: K + 2]
    p = np.exp(logp - logp.max())
    return p / p.sum()
