"""Compiled forward scan for the joint (z_t, w_t) update.

All randomness is drawn by the caller and passed in as arrays, so the scan is
a pure function of its inputs and the numpy Generator stays the single source
of entropy.

Variant codes: 0 plain, 1 sticky, 2 disentangled.  For 0/1 ``skappa`` is the
absolute sticky weight (0 for plain) and ``w`` stays all zero.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _log(x):
    return math.log(x) if x > 0.0 else NEG_INF


@njit(cache=True)
def build_counts(z, w, kmax):
    n = np.zeros((kmax, kmax), dtype=np.int64)
    nrow = np.zeros(kmax, dtype=np.int64)
    occ = np.zeros(kmax, dtype=np.int64)
    T = z.shape[0]
    for t in range(T):
        occ[z[t]] += 1
        if t > 0 and w[t] == 0:
            n[z[t - 1], z[t]] += 1
            nrow[z[t - 1]] += 1
    return n, nrow, occ


@njit(cache=True)
def _prune(e, K, z, beta, kappa, mu, sig2, n, nrow, occ):
    beta[K] += beta[e]
    for i in range(e, K):
        beta[i] = beta[i + 1]
    beta[K] = 0.0
    for i in range(e, K - 1):
        kappa[i] = kappa[i + 1]
        mu[i] = mu[i + 1]
        sig2[i] = sig2[i + 1]
        occ[i] = occ[i + 1]
        nrow[i] = nrow[i + 1]
    for r in range(K):
        for c in range(e, K - 1):
            n[r, c] = n[r, c + 1]
    for r in range(e, K - 1):
        for c in range(K):
            n[r, c] = n[r + 1, c]
    for i in range(K):
        n[K - 1, i] = 0
        n[i, K - 1] = 0
    occ[K - 1] = 0
    nrow[K - 1] = 0
    for t in range(z.shape[0]):
        if z[t] > e:
            z[t] -= 1
    return K - 1


@njit(cache=True)
def conditional(t, y, z, K, beta, kappa, mu, sig2, n, nrow, alpha, skappa, variant,
                kmax, kappa_new, m0, k0, a0, b0, logp):
    """Fill ``logp`` for the candidates of site t (t already removed from counts).

    Slots 0..K-1: existing regime with w_t = 0; slot K: stay (w_t = 1, ds only);
    slot K+1: new regime.
    """
    T = y.shape[0]
    j = z[t - 1] if t > 0 else -1
    l = z[t + 1] if t + 1 < T else -1
    yt = y[t]
    ds = variant == 2
    stick = skappa if variant == 1 else 0.0
    bu = beta[K]

    for c in range(K + 2):
        logp[c] = NEG_INF

    for k in range(K):
        ll = -0.5 * math.log(2.0 * math.pi * sig2[k]) - 0.5 * (yt - mu[k]) ** 2 / sig2[k]
        for wt in range(2):
            if wt == 1 and (not ds or t == 0 or k != j):
                continue
            # incoming
            if t == 0:
                lin = _log(beta[k])
            elif wt == 1:
                lin = _log(kappa[j])
            elif ds:
                lin = (_log(1.0 - kappa[j]) + _log(n[j, k] + alpha * beta[k])
                       - math.log(nrow[j] + alpha))
            else:
                sk = stick if k == j else 0.0
                lin = _log(n[j, k] + alpha * beta[k] + sk) - math.log(nrow[j] + alpha + stick)
            # outgoing, with w_{t+1} marginalised
            lout = 0.0
            if l >= 0:
                adj = 1.0 if (t > 0 and wt == 0 and k == j) else 0.0
                same = 1.0 if l == k else 0.0
                if ds:
                    pred = (n[k, l] + alpha * beta[l] + adj * same) / (nrow[k] + alpha + adj)
                    lout = _log(kappa[k] * same + (1.0 - kappa[k]) * pred)
                else:
                    pred = ((n[k, l] + alpha * beta[l] + stick * same + adj * same)
                            / (nrow[k] + alpha + stick + adj))
                    lout = _log(pred)
            logp[K if wt == 1 else k] = lin + lout + ll

    if K < kmax:
        nu = 2.0 * a0
        s2 = b0 * (1.0 + k0) / (a0 * k0)
        ll = (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
              - 0.5 * math.log(nu * math.pi * s2)
              - 0.5 * (nu + 1.0) * math.log1p((yt - m0) ** 2 / (nu * s2)))
        if t == 0:
            lin = _log(bu)
        elif ds:
            lin = _log(1.0 - kappa[j]) + _log(alpha * bu) - math.log(nrow[j] + alpha)
        else:
            lin = _log(alpha * bu) - math.log(nrow[j] + alpha + stick)
        lout = 0.0
        if l >= 0:
            if ds:
                lout = _log((1.0 - kappa_new) * beta[l])
            else:
                lout = _log(alpha * beta[l] / (alpha + stick))
        logp[K + 1] = lin + lout + ll


@njit(cache=True)
def scan(y, z, w, K, beta, kappa, mu, sig2, alpha, skappa, variant, kmax,
         u_choice, u_w, kappa_new, b_split, g_new, e_new, m0, k0, a0, b0):
    """One forward pass over t; mutates the state arrays and returns the new K."""
    T = y.shape[0]
    n, nrow, occ = build_counts(z, w, kmax)
    logp = np.empty(kmax + 2)
    prob = np.empty(kmax + 2)
    ds = variant == 2
    for t in range(T):
        k_old = z[t]
        if t > 0 and w[t] == 0:
            n[z[t - 1], k_old] -= 1
            nrow[z[t - 1]] -= 1
        if t + 1 < T and w[t + 1] == 0:
            n[k_old, z[t + 1]] -= 1
            nrow[k_old] -= 1
        occ[k_old] -= 1
        if occ[k_old] == 0:
            K = _prune(k_old, K, z, beta, kappa, mu, sig2, n, nrow, occ)

        conditional(t, y, z, K, beta, kappa, mu, sig2, n, nrow, alpha, skappa, variant,
                    kmax, kappa_new[t], m0, k0, a0, b0, logp)
        top = NEG_INF
        for c in range(K + 2):
            if logp[c] > top:
                top = logp[c]
        total = 0.0
        for c in range(K + 2):
            prob[c] = math.exp(logp[c] - top) if logp[c] > NEG_INF else 0.0
            total += prob[c]
        target = u_choice[t] * total
        pick = -1
        acc = 0.0
        for c in range(K + 2):
            if prob[c] > 0.0:
                pick = c
                acc += prob[c]
                if acc >= target:
                    break

        j = z[t - 1] if t > 0 else -1
        if pick == K + 1:
            kn = K
            split = b_split[t] * beta[K]
            beta[K + 1] = beta[K] - split
            beta[K] = split
            kappa[K] = kappa_new[t] if ds else kappa[0]
            k1 = k0 + 1.0
            m1 = (k0 * m0 + y[t]) / k1
            b1 = b0 + k0 * (y[t] - m0) ** 2 / (2.0 * k1)
            sig2[K] = b1 / g_new[t]
            mu[K] = m1 + math.sqrt(sig2[K] / k1) * e_new[t]
            occ[K] = 0
            nrow[K] = 0
            K += 1
            wt = 0
        elif pick == K:
            kn = j
            wt = 1
        else:
            kn = pick
            wt = 0

        z[t] = kn
        w[t] = wt
        occ[kn] += 1
        if t > 0 and wt == 0:
            n[j, kn] += 1
            nrow[j] += 1
        if t + 1 < T:
            l = z[t + 1]
            if l != kn or not ds:
                w[t + 1] = 0
            else:
                stay = kappa[kn]
                move = (1.0 - kappa[kn]) * (n[kn, kn] + alpha * beta[kn]) / (nrow[kn] + alpha)
                w[t + 1] = 1 if u_w[t] * (stay + move) < stay else 0
            if w[t + 1] == 0:
                n[kn, l] += 1
                nrow[kn] += 1
    return K
