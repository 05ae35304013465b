import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln, logsumexp
from scipy.stats import beta as beta_dist

from regimecast.regime import (
    NIGPrior,
    Priors,
    RegimeError,
    RegimePosterior,
    SegmentConfig,
    compress_regimes,
    expected_self_transition,
    fit_segmentation,
    gibbs_sweep,
    initial_state,
    kl_gaussian,
    sample_emission,
    sample_kappa,
    site_conditional,
    stick_breaking,
)


def three_block(seed):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(0, 1, 100), rng.normal(10, 1, 100), rng.normal(0, 1, 100)])


# -- stick breaking ----------------------------------------------------------

@given(st.floats(0.05, 20), st.integers(1, 60), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_stick_breaking_sums_to_one(gamma, K, seed):
    b = stick_breaking(gamma, K, np.random.default_rng(seed))
    assert b.shape == (K + 1,)
    assert (b >= 0).all()
    assert abs(b.sum() - 1) < 1e-12


def test_stick_breaking_first_weight_mean():
    rng = np.random.default_rng(0)
    first = np.array([stick_breaking(1.0, 3, rng)[0] for _ in range(100_000)])
    assert abs(first.mean() - 0.5) < 0.01


def test_stick_breaking_small_gamma():
    rng = np.random.default_rng(1)
    first = np.array([stick_breaking(0.01, 2, rng)[0] for _ in range(10_000)])
    oracle = beta_dist(1, 0.01).sf(0.9)
    assert oracle > 0.95
    assert (first > 0.9).mean() >= 0.95


def test_stick_breaking_rejects_bad_input():
    rng = np.random.default_rng(0)
    with pytest.raises(RegimeError):
        stick_breaking(0.0, 3, rng)
    with pytest.raises(RegimeError):
        stick_breaking(1.0, 0, rng)


# -- closed forms ------------------------------------------------------------

def test_kl_examples():
    assert kl_gaussian(2.0, 2.0, 1.0) == 0.0
    assert kl_gaussian(1.0, 3.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(RegimeError):
        kl_gaussian(0.0, 1.0, 0.0)


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(1e-3, 100))
def test_kl_symmetric(a, b, s):
    assert kl_gaussian(a, b, s) == kl_gaussian(b, a, s)
    assert kl_gaussian(a, b, s) >= 0


def test_expected_self_transition_examples():
    assert expected_self_transition("hdp", {"beta_j": 0.3}) == pytest.approx(0.3)
    assert expected_self_transition("sticky", {"beta_j": 0.5, "alpha": 1, "kappa": 1}) == 0.75
    assert expected_self_transition("ds", {"beta_j": 0.2, "rho1": 1, "rho2": 1}) == pytest.approx(0.6)
    with pytest.raises(RegimeError):
        expected_self_transition("sticky", {"beta_j": 0.5, "alpha": 1})


@given(st.floats(0, 1), st.floats(0.01, 50), st.floats(0, 50))
def test_sticky_gap_nonnegative(b, alpha, kappa):
    gap = (expected_self_transition("sticky", {"beta_j": b, "alpha": alpha, "kappa": kappa})
           - expected_self_transition("hdp", {"beta_j": b}))
    assert gap == pytest.approx(kappa * (1 - b) / (alpha + kappa), abs=1e-12)
    assert gap >= -1e-12


# -- conjugate steps ---------------------------------------------------------

def test_kappa_step_beta_posterior():
    rng = np.random.default_rng(0)
    draws = sample_kappa(1.0, 1.0, np.full(100_000, 9), np.full(100_000, 1), rng)
    assert abs(draws.mean() - 10 / 12) < 0.01


def test_emission_step_nig_posterior():
    rng = np.random.default_rng(0)
    y = rng.normal(5, 1, 100)
    prior = NIGPrior(0.0, 1.0, 2.0, 1.0)
    # closed form posterior mean of mu
    oracle = (1.0 * 0.0 + y.sum()) / (1.0 + 100)
    assert abs(oracle - 5) < 0.3
    post = prior.posterior(y)
    assert post.m0 == pytest.approx(oracle)
    assert post.k0 == 101 and post.a0 == 52
    mus = np.array([sample_emission(y, prior, rng)[0] for _ in range(2000)])
    assert abs(mus.mean() - 5) < 0.3


def test_nig_prior_requires_finite_variance():
    with pytest.raises(RegimeError):
        NIGPrior(a0=1.0)


def test_priors_validation():
    with pytest.raises(RegimeError):
        Priors(alpha_shape=0)
    with pytest.raises(RegimeError):
        Priors(rho_grid=np.empty((0, 2)))
    with pytest.raises(RegimeError):
        Priors(rho_grid=[(1, 1), (2, 2)], rho_weights=[0.2, 0.2])


# -- the site conditional against a brute-force joint -----------------------

def _polya(n, conc, total):
    return (gammaln(total) - gammaln(total + n.sum(1))).sum() + (gammaln(conc + n) - gammaln(conc)).sum()


def _brute_log_joint(state, y, z, w):
    """Joint of (y, z, w) given beta, kappa, theta, alpha; rows integrated out."""
    K = state.K
    n = np.zeros((K, K))
    for t in range(1, len(z)):
        if w[t] == 0:
            n[z[t - 1], z[t]] += 1
    b = state.beta[:K]
    if state.variant == "ds":
        lp = _polya(n, state.alpha * np.tile(b, (K, 1)), state.alpha)
        for t in range(1, len(z)):
            k = state.kappa[z[t - 1]]
            lp += np.log(k) if w[t] else np.log1p(-k)
    else:
        lp = _polya(n, state.alpha * np.tile(b, (K, 1)) + state.sticky_kappa * np.eye(K),
                    state.alpha + state.sticky_kappa)
    lp += np.log(b[z[0]])
    s2 = state.sigma2[z]
    lp += (-0.5 * np.log(2 * np.pi * s2) - 0.5 * (y - state.mu[z]) ** 2 / s2).sum()
    return lp


def _brute_conditional(state, y, t):
    T = len(y)
    out = {}
    for k in range(state.K):
        for wt in (0, 1):
            if wt == 1 and (state.variant != "ds" or t == 0 or state.z[t - 1] != k):
                continue
            terms = []
            nxt = (0, 1) if (t + 1 < T and state.variant == "ds" and state.z[t + 1] == k) else (0,)
            for wn in nxt:
                z = state.z.copy()
                w = state.w.copy()
                z[t], w[t] = k, wt
                if t + 1 < T:
                    w[t + 1] = wn
                terms.append(_brute_log_joint(state, y, z, w))
            out[(k, wt)] = logsumexp(terms)
    keys = list(out)
    vals = np.array([out[k] for k in keys])
    p = np.exp(vals - logsumexp(vals))
    return dict(zip(keys, p))


def _random_state(variant, seed, T=14, K=3):
    rng = np.random.default_rng(seed)
    z = np.repeat(np.arange(K), T // K + 1)[:T]
    rng.shuffle(z)
    # every regime keeps at least two members so removing one site never empties it
    while np.bincount(z, minlength=K).min() < 3:
        rng.shuffle(z)
    w = np.zeros(T, dtype=np.int8)
    if variant == "ds":
        same = np.nonzero(z[1:] == z[:-1])[0] + 1
        w[same] = rng.random(same.size) < 0.5
    beta = rng.dirichlet(np.ones(K + 1))
    kappa = rng.uniform(0.1, 0.9, K) if variant == "ds" else np.full(K, 0.3)
    return RegimePosterior(z=z, w=w, beta=beta, kappa=kappa, mu=rng.normal(0, 2, K),
                           sigma2=rng.uniform(0.5, 3, K), alpha=rng.uniform(0.5, 3), gamma=1.0,
                           rho1=1.0, rho2=1.0, variant=variant,
                           sticky_kappa=1.7 if variant == "sticky" else 0.0)


@pytest.mark.parametrize("variant", ["ds", "sticky", "hdp"])
@pytest.mark.parametrize("seed", range(6))
def test_site_conditional_matches_brute_force(variant, seed):
    state = _random_state(variant, seed)
    y = np.random.default_rng(seed + 100).normal(0, 2, state.T)
    priors = Priors(emission_prior=NIGPrior(0.0, 0.1, 2.0, 1.0))
    for t in range(state.T):
        p = site_conditional(state, y, t, priors)
        K = state.K
        got = {}
        for k in range(K):
            if p[k] > 0:
                got[(k, 0)] = p[k]
        if p[K] > 0:
            got[(state.z[t - 1], 1)] = p[K]
        tot = sum(got.values())
        oracle = _brute_conditional(state, y, t)
        assert set(got) == set(oracle)
        for key, val in oracle.items():
            assert got[key] / tot == pytest.approx(val, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("variant", ["ds", "sticky"])
def test_site_conditional_label_equivariant(variant):
    state = _random_state(variant, 3)
    y = np.random.default_rng(7).normal(0, 2, state.T)
    priors = Priors(emission_prior=NIGPrior(0.0, 0.1, 2.0, 1.0))
    perm = np.array([2, 0, 1])  # old label k becomes perm[k]
    inv = np.argsort(perm)
    permuted = RegimePosterior(
        z=perm[state.z], w=state.w, beta=np.append(state.beta[:3][inv], state.beta[3]),
        kappa=state.kappa[inv], mu=state.mu[inv], sigma2=state.sigma2[inv], alpha=state.alpha,
        gamma=1.0, rho1=1.0, rho2=1.0, variant=variant, sticky_kappa=state.sticky_kappa)
    for t in range(state.T):
        a = site_conditional(state, y, t, priors)
        b = site_conditional(permuted, y, t, priors)
        np.testing.assert_allclose(b[perm], a[:3], rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(b[3:], a[3:], rtol=1e-12, atol=1e-15)


# -- sweeps -----------------------------------------------------------------

@pytest.mark.parametrize("variant", ["ds", "sticky", "hdp"])
@given(seed=st.integers(0, 2**31), T=st.integers(2, 40))
@settings(max_examples=15, deadline=None)
def test_invariants_after_every_sweep(variant, seed, T):
    rng = np.random.default_rng(seed)
    y = rng.normal(0, 1, T) + 8 * (rng.random(T) < 0.3)
    priors = Priors().with_data(y) if np.var(y) > 0 else Priors(emission_prior=NIGPrior())
    state = initial_state(y, priors, variant, rng)
    for _ in range(5):
        state = gibbs_sweep(state, y, priors, rng)
        state.validate()


def test_degenerate_single_regime():
    y = np.array([1.0, 1.2])
    priors = Priors(rho_grid=[(1e4, 1e-3)], gamma_shape=1e-3, gamma_rate=1e3,
                    emission_prior=NIGPrior(1.1, 1.0, 2.0, 1.0))
    rng = np.random.default_rng(0)
    state = RegimePosterior(z=[0, 0], w=[0, 1], beta=[1 - 1e-12, 1e-12], kappa=[1 - 1e-9],
                            mu=[1.1], sigma2=[1.0], alpha=1.0, gamma=1e-6, rho1=1e4,
                            rho2=1e-3, variant="ds")
    for _ in range(20):
        state = gibbs_sweep(state, y, priors, rng)
        assert state.z.tolist() == [0, 0]
        assert state.w[1] == 1


def test_sweep_rejects_nonfinite():
    y = np.array([0.0, np.nan, 1.0])
    state = RegimePosterior(z=[0, 0, 0], w=[0, 1, 1], beta=[0.5, 0.5], kappa=[0.5], mu=[0.0],
                            sigma2=[1.0], alpha=1.0, gamma=1.0, rho1=1.0, rho2=1.0)
    with pytest.raises(RegimeError):
        gibbs_sweep(state, y, Priors(emission_prior=NIGPrior()), np.random.default_rng(0))


def test_fit_refuses_short_series():
    with pytest.raises(RegimeError, match="too short"):
        fit_segmentation(np.arange(9.0))


def test_config_validation():
    with pytest.raises(RegimeError):
        SegmentConfig(sweeps=10, burn_in=10)
    with pytest.raises(RegimeError):
        SegmentConfig(variant="hsmm")


def test_fit_deterministic_and_trace():
    y = three_block(0)
    cfg = SegmentConfig(sweeps=60, burn_in=20, seed=4)
    a = fit_segmentation(y, cfg)
    b = fit_segmentation(y, cfg)
    np.testing.assert_array_equal(a.map_path, b.map_path)
    np.testing.assert_array_equal(a.trace, b.trace)
    assert np.isfinite(a.trace).all()
    running = np.maximum.accumulate(a.trace)
    assert (np.diff(running) >= 0).all()
    assert a.map_sweep >= 20
    assert a.trace[a.map_sweep] == a.trace[20:].max()
    assert len(a.posterior.log_likelihood_trace) == 60


@pytest.mark.parametrize("variant", ["hdp", "sticky", "ds"])
def test_three_block_recovery_each_variant(variant):
    y = three_block(11)
    res = fit_segmentation(y, SegmentConfig(sweeps=400, burn_in=150, seed=2, variant=variant))
    post = compress_regimes(res.posterior, obs=y)
    truth = np.repeat([0, 1, 0], 100)
    assert post.K in (2, 3)
    hi = int(np.argmax(post.mu))
    assert ((post.z == hi) == (truth == 1)).mean() >= 0.95


def test_constant_series_one_regime():
    y = 5.0 + np.random.default_rng(1).normal(0, 1e-3, 200)
    res = fit_segmentation(y, SegmentConfig(sweeps=300, burn_in=100, seed=3))
    assert compress_regimes(res.posterior).K == 1


# -- compression -------------------------------------------------------------

def _post(mu, sigma2, sizes):
    z = np.repeat(np.arange(len(mu)), sizes)
    K = len(mu)
    return RegimePosterior(z=z, w=np.zeros(z.size), beta=np.full(K + 1, 1 / (K + 1)),
                           kappa=np.full(K, 0.5), mu=mu, sigma2=sigma2, alpha=1.0, gamma=1.0,
                           rho1=1.0, rho2=1.0)


def test_compress_identical_regimes():
    out = compress_regimes(_post([1.0, 1.0], [2.0, 2.0], [10, 10]), 0.05, 0.0)
    assert out.K == 1
    assert out.mu[0] == pytest.approx(1.0)
    assert out.sigma2[0] == pytest.approx(2.0)
    out.validate()


def test_compress_zero_threshold_is_identity():
    post = _post([0.0, 0.0, 5.0], [1.0, 1.0, 1.0], [10, 10, 10])
    out = compress_regimes(post, 0.0, 0.0)
    np.testing.assert_array_equal(out.z, post.z)
    np.testing.assert_array_equal(out.mu, post.mu)
    assert out.parent is post


def test_compress_three_regimes():
    post = _post([0.0, 0.1, 10.0], [1.0, 1.0, 1.0], [50, 50, 50])
    assert kl_gaussian(0.0, 0.1, 1.0) == pytest.approx(0.005)
    out = compress_regimes(post, 0.5, 0.0)
    assert out.K == 2
    assert out.z.tolist() == [0] * 100 + [1] * 50
    assert out.mu[0] == pytest.approx(0.05)
    assert out.mu[1] == 10.0
    assert out.beta.sum() == pytest.approx(1.0)


def test_compress_min_mass():
    post = _post([0.0, 4.0, 10.0], [1.0, 1.0, 1.0], [97, 1, 102])
    out = compress_regimes(post, 0.05, 0.02)
    assert out.K == 2
    assert out.z[97] == out.z[0]  # the singleton joined its nearer neighbour


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(0.1, 5), st.integers(1, 30)),
                min_size=1, max_size=6),
       st.floats(0, 2), st.floats(0, 0.3))
@settings(max_examples=60, deadline=None)
def test_compress_properties(spec, threshold, min_mass):
    mu, s2, sizes = map(list, zip(*spec))
    post = _post(mu, s2, sizes)
    out = compress_regimes(post, threshold, min_mass)
    out.validate()
    assert out.K <= post.K
    # partition refinement: each old regime maps into exactly one new one
    for k in range(post.K):
        assert len(set(out.z[post.z == k])) == 1
    # regimes that were not merged keep exactly their members
    for g in range(out.K):
        olds = set(post.z[out.z == g])
        if len(olds) == 1:
            (k,) = olds
            np.testing.assert_array_equal(out.z == g, post.z == k)
