"""Post-hoc merging of near-duplicate or negligible regimes."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import RegimePosterior, kl_gaussian


def _pooled(counts, sigma2, i, j):
    tot = counts[i] + counts[j]
    if tot == 0:
        return 0.5 * (sigma2[i] + sigma2[j])
    return (counts[i] * sigma2[i] + counts[j] * sigma2[j]) / tot


def _pair_kl(mu, sigma2, counts, i, j):
    return kl_gaussian(mu[i], mu[j], _pooled(counts, sigma2, i, j))


def compress_regimes(post: RegimePosterior, kl_threshold: float = 0.05, min_mass: float = 0.02,
                     obs=None) -> RegimePosterior:
    """Merge regimes whose emissions are close in KL or that hold little data.

    Merged emissions are refit from ``obs`` when given, otherwise by moment
    matching the members.  The input is kept as ``parent`` of the result.
    """
    groups = [[k] for k in range(post.K)]
    counts = post.counts().astype(float)
    mu = post.mu.astype(float).tolist()
    s2 = post.sigma2.astype(float).tolist()
    obs = None if obs is None else np.asarray(obs, dtype=float)

    def merge(a, b):
        na, nb = counts[a], counts[b]
        tot = na + nb
        members = groups[a] + groups[b]
        if obs is not None:
            y = obs[np.isin(post.z, members)]
            m = float(y.mean())
            v = float(y.var()) if y.size > 1 else min(s2[a], s2[b])
            v = max(v, 1e-12)
        else:
            m = (na * mu[a] + nb * mu[b]) / tot
            v = (na * (s2[a] + mu[a] ** 2) + nb * (s2[b] + mu[b] ** 2)) / tot - m * m
            v = max(v, min(s2[a], s2[b]))
        groups[a] = members
        counts[a] = tot
        mu[a], s2[a] = m, v
        for lst in (groups, mu, s2):
            del lst[b]
        counts_list = list(counts)
        del counts_list[b]
        return np.array(counts_list)

    while len(groups) > 1:
        best, pair = np.inf, None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                d = _pair_kl(mu, s2, counts, i, j)
                if d < best:
                    best, pair = d, (i, j)
        if not best < kl_threshold:
            break
        counts = merge(*pair)

    floor = min_mass * post.T
    while len(groups) > 1:
        small = int(np.argmin(counts))
        if counts[small] >= floor:
            break
        others = [j for j in range(len(groups)) if j != small]
        near = min(others, key=lambda j: _pair_kl(mu, s2, counts, small, j))
        a, b = min(small, near), max(small, near)
        counts = merge(a, b)

    if len(groups) == post.K:
        return replace(post, parent=post)

    label = np.empty(post.K, dtype=np.int64)
    for g, members in enumerate(groups):
        label[members] = g
    z = label[post.z]
    K = len(groups)
    beta = np.zeros(K + 1)
    np.add.at(beta, label, post.beta[: post.K])
    beta[K] = post.beta[post.K]
    w_counts = np.bincount(post.z, minlength=post.K).astype(float)
    kappa = np.array([np.average(post.kappa[m], weights=w_counts[m]) for m in groups])
    return replace(post, z=z, beta=beta, kappa=kappa, mu=np.array(mu), sigma2=np.array(s2),
                   parent=post)
