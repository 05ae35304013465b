"""Point-forecast baselines: LEAR (per-hour LASSO autoregression) and a
four-hidden-layer multivariate MLP."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np
import pandas as pd
import torch

from .assoc import standardization
from .ingest import HOURS, LagUnavailableError, MarketTable, build_features, build_training_set

LEAR_FEATURES = 247
N_LAMBDA = 20
LAMBDA_RATIO = 1e-4
LEAR_VAL_DAYS = 91


class BenchError(ValueError):
    pass


@numba.njit(cache=True)
def _kkt_gram(G, c, lam, theta):
    q = c - G @ theta  # q_j = X_j'(y - X theta)/m
    viol = 0.0
    for j in range(c.size):
        if G[j, j] <= 0.0:
            continue
        if theta[j] > 0.0:
            v = abs(q[j] - lam)
        elif theta[j] < 0.0:
            v = abs(q[j] + lam)
        else:
            v = max(abs(q[j]) - lam, 0.0)
        if v > viol:
            viol = v
    return viol


@numba.njit(cache=True)
def _cd_gram(G, c, lam, theta, tol, kkt_tol, max_sweeps):
    """Cyclic coordinate descent on 1/2 t'Gt - c't + lam |t|_1 (in place).

    Returns the sweep count on convergence, -1 when ``max_sweeps`` ran out.
    """
    p = c.size
    q = c - G @ theta
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = theta[j]
            u = q[j] + gjj * old
            if u > lam:
                new = (u - lam) / gjj
            elif u < -lam:
                new = (u + lam) / gjj
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                theta[j] = new
                for k in range(p):
                    q[k] -= d * G[k, j]
                if abs(d) > delta:
                    delta = abs(d)
        if delta < tol:
            q[:] = c - G @ theta
            if _kkt_gram(G, c, lam, theta) < kkt_tol:
                return sweep + 1
    return -1


def _gram_objective(G, c, lam, theta):
    return 0.5 * theta @ G @ theta - c @ theta + lam * np.abs(theta).sum()


def _polish(G, c, lam, theta, kkt_tol):
    """Active-set step on the current support and signs.

    Solves the optimality equations on the support. If the solution keeps
    the signs and passes KKT it is final. Otherwise move toward it, stopping
    where the first coordinate reaches zero, provided the objective does not
    rise. Returns ``(theta, done)``.
    """
    act = np.flatnonzero(theta)
    if act.size == 0:
        return theta, False
    s = np.sign(theta[act])
    A, b = G[np.ix_(act, act)], c[act] - lam * s
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
    cur = theta[act]
    cross = sol * s <= 0
    cand = np.zeros_like(theta)
    if not cross.any():
        cand[act] = sol
        if _kkt_gram(G, c, lam, cand) < kkt_tol:
            return cand, True
    else:
        ratio = cur[cross] / (cur[cross] - sol[cross])
        t = ratio.min()
        new = cur + t * (sol - cur)
        new[np.flatnonzero(cross)[ratio.argmin()]] = 0.0
        cand[act] = new
    if _gram_objective(G, c, lam, cand) <= _gram_objective(G, c, lam, theta):
        return cand, False
    return theta, False


def kkt_violation(X, y, theta, lam) -> float:
    """Largest breach of the LASSO optimality conditions for
    (1/2m)|y - X theta|^2 + lam |theta|_1 (X, y centred)."""
    X = np.asarray(X, dtype=float)
    m = X.shape[0]
    q = X.T @ (np.asarray(y, dtype=float) - X @ theta) / m
    live = (X ** 2).sum(axis=0) > 0
    v = np.where(theta > 0, np.abs(q - lam), np.where(theta < 0, np.abs(q + lam),
                                                       np.maximum(np.abs(q) - lam, 0.0)))
    return float(np.max(v[live], initial=0.0))


def lambda_max(X, y) -> float:
    return float(np.max(np.abs(X.T @ y)) / X.shape[0])


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray
    lam: float
    sweeps: int
    kkt: float


def _gram(X, y):
    m = X.shape[0]
    return X.T @ X / m, X.T @ y / m


def fit_lasso(X, y, lam: float, tol: float = 1e-8, kkt_tol: float = 1e-7,
              max_sweeps: int = 100000, warm: Optional[np.ndarray] = None,
              gram=None) -> LassoFit:
    """Minimize (1/2m)|y - X theta|^2 + lam |theta|_1 by coordinate descent.

    No intercept: centre ``X`` and ``y`` first. ``gram`` may carry a
    precomputed ``(X'X/m, X'y/m)`` to reuse across targets.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise BenchError("need at least two rows")
    if lam < 0:
        raise BenchError("lambda must be non-negative")
    G, c = gram if gram is not None else _gram(X, y)
    G, c = np.ascontiguousarray(G), np.ascontiguousarray(c)
    theta = np.zeros(X.shape[1]) if warm is None else np.array(warm, dtype=float)
    # coordinate descent in bursts with an active-set step after each
    sweeps, burst = 0, 8
    while sweeps < max_sweeps:
        n = _cd_gram(G, c, float(lam), theta, tol, kkt_tol, burst)
        if n > 0:
            sweeps += n
            break
        sweeps += burst
        theta, done = _polish(G, c, lam, theta, kkt_tol)
        if done:
            break
        burst = min(2 * burst, 64)
    viol = kkt_violation(X, y, theta, lam)
    if viol > 1e-6:
        raise BenchError(f"coordinate descent did not reach KKT (violation {viol:.2e})")
    return LassoFit(theta, float(lam), sweeps, viol)


def lasso_objective(X, y, theta, lam) -> float:
    r = y - X @ theta
    return float(r @ r / (2 * X.shape[0]) + lam * np.abs(theta).sum())


def lambda_grid(lmax: float, n: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    if lmax <= 0:
        return np.zeros(1)
    return np.geomspace(lmax, ratio * lmax, n)


def lear_design(table: MarketTable, target_day: int, window: int):
    """Inputs without the day index (247 columns) and hourly targets."""
    X, Y = build_training_set(table, target_day, window)
    return X[:, 1:], Y


@dataclass(frozen=True)
class LearForecast:
    prediction: np.ndarray  # 24 prices
    lambdas: np.ndarray  # chosen per hour (standardized scale)
    sigma: np.ndarray  # per-hour RMSE on the validation days
    coef: np.ndarray = field(repr=False, default=None)  # 24 x 247, standardized space


def _standardize(X, Y):
    xm, xs = standardization(X)
    ym, ys = standardization(Y)
    return (X - xm) / xs, (Y - ym) / ys, (xm, xs, ym, ys)


def lear_fit_predict(table: MarketTable, target_day: int, window: int = 1460,
                     lambdas=None, n_val: int = LEAR_VAL_DAYS, hours=None) -> LearForecast:
    """Forecast day ``target_day`` from the ``window`` days before it.

    For each hour the penalty is picked by validation MAE on the last
    ``n_val`` days (model fit on the rest), then refit on the full window.
    ``lambdas`` overrides the per-hour grid (values on the standardized scale).
    """
    try:
        X, Y = lear_design(table, target_day, window)
        x_star = build_features(table, target_day)[1:]
    except LagUnavailableError as exc:
        raise BenchError(f"insufficient history for day {target_day}: {exc}") from exc
    if window - n_val < 2:
        raise BenchError(f"window {window} too short for {n_val} validation days")
    assert X.shape[1] == LEAR_FEATURES

    Xa, Ya, (xm, xs, ym, ys) = _standardize(X[:-n_val], Y[:-n_val])
    Xv = (X[-n_val:] - xm) / xs
    Xf, Yf, (fxm, fxs, fym, fys) = _standardize(X, Y)
    Ga = Xa.T @ Xa / Xa.shape[0]
    Gf = Xf.T @ Xf / Xf.shape[0]
    xq = (x_star - fxm) / fxs

    hours = range(HOURS) if hours is None else hours
    pred = np.full(HOURS, np.nan)
    chosen = np.full(HOURS, np.nan)
    sigma = np.full(HOURS, np.nan)
    coef = np.zeros((HOURS, X.shape[1]))
    for h in hours:
        ca = Xa.T @ Ya[:, h] / Xa.shape[0]
        grid = lambda_grid(np.abs(ca).max()) if lambdas is None else np.asarray(lambdas, float)
        best = (np.inf, None, None)
        warm = None
        for lam in grid:
            fit = fit_lasso(Xa, Ya[:, h], lam, warm=warm, gram=(Ga, ca))
            warm = fit.coef
            val = Xv @ fit.coef * ys[h] + ym[h]
            err = Y[-n_val:, h] - val
            mae = np.abs(err).mean()
            if mae < best[0]:
                best = (mae, lam, np.sqrt((err ** 2).mean()))
        _, lam, rmse = best
        cf = Xf.T @ Yf[:, h] / Xf.shape[0]
        warm = None
        for step in grid[grid > lam]:  # follow the path down for a warm start
            warm = fit_lasso(Xf, Yf[:, h], step, warm=warm, gram=(Gf, cf)).coef
        fit = fit_lasso(Xf, Yf[:, h], lam, warm=warm, gram=(Gf, cf))
        coef[h] = fit.coef
        pred[h] = xq @ fit.coef * fys[h] + fym[h]
        chosen[h], sigma[h] = lam, rmse
    return LearForecast(pred, chosen, sigma, coef)


@dataclass(frozen=True)
class DnnConfig:
    hidden: tuple = (128, 128, 128, 128)
    epochs: int = 150
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0


@dataclass(frozen=True)
class DnnModel:
    layers: tuple
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    config: DnnConfig = DnnConfig()

    def predict(self, X) -> np.ndarray:
        h = (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_mean) / self.x_std
        for i, (W, b) in enumerate(self.layers):
            h = h @ W + b
            if i < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        return h * self.y_std + self.y_mean


def fit_dnn(X, Y, config: DnnConfig = DnnConfig()) -> DnnModel:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] < 32:
        raise BenchError(f"need at least 32 training days, got {X.shape[0]}")
    if len(config.hidden) != 4:
        raise BenchError("the DNN baseline has exactly four hidden layers")
    rng = np.random.default_rng(config.seed)
    Xs, Ys, (xm, xs, ym, ys) = _standardize(X, Y)
    sizes = (X.shape[1], *config.hidden, Y.shape[1])
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / a)
        params += [torch.tensor(rng.uniform(-bound, bound, (a, b)), requires_grad=True),
                   torch.zeros(b, dtype=torch.float64, requires_grad=True)]
    # zero output layer: training starts from the sample mean
    params[-2].data.zero_()
    opt = torch.optim.Adam(params, lr=config.lr)
    Xt, Yt = torch.from_numpy(Xs), torch.from_numpy(Ys)
    n = Xs.shape[0]
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            bi = torch.from_numpy(perm[s:s + config.batch_size])
            h = Xt[bi]
            for i in range(0, len(params), 2):
                h = h @ params[i] + params[i + 1]
                if i < len(params) - 2:
                    h = torch.relu(h)
            loss = ((h - Yt[bi]) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
    layers = tuple((params[i].detach().numpy().copy(), params[i + 1].detach().numpy().copy())
                   for i in range(0, len(params), 2))
    return DnnModel(layers, xm, xs, ym, ys, config)


DNN_SPACE = {"hidden": (64, 128), "lr": (1e-3, 3e-4)}


@dataclass(frozen=True)
class DnnForecast:
    prediction: np.ndarray
    sigma: np.ndarray  # per-hour validation RMSE of the chosen trial
    trials: pd.DataFrame = field(repr=False, default=None)


def dnn_fit_predict(X, Y, x_star, config: DnnConfig = DnnConfig(), trials: int = 4,
                    val_fraction: float = 0.2, seed: int = 0) -> DnnForecast:
    """Seeded search over DNN_SPACE on the chronologically last rows, then
    refit on all rows with the winner and forecast ``x_star``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] < 32:
        raise BenchError(f"need at least 32 training days, got {X.shape[0]}")
    n_val = max(1, int(round(val_fraction * X.shape[0])))
    grid = list(itertools.product(*DNN_SPACE.values()))
    picks = np.random.default_rng(seed).permutation(len(grid))[:trials]
    rows, best = [], None
    can_search = X.shape[0] - n_val >= 32
    for t, gi in enumerate(picks if can_search else []):
        width, lr = grid[gi]
        cfg = replace(config, hidden=(width,) * 4, lr=lr, seed=config.seed + t)
        err = Y[-n_val:] - fit_dnn(X[:-n_val], Y[:-n_val], cfg).predict(X[-n_val:])
        rmse = np.sqrt((err ** 2).mean(axis=0))
        rows.append({"hidden": width, "lr": lr, "seed": cfg.seed, "val_mse": float((err ** 2).mean())})
        if best is None or rows[-1]["val_mse"] < best[0]:
            best = (rows[-1]["val_mse"], cfg, rmse)
    if best is None:
        cfg = config
        model = fit_dnn(X, Y, cfg)
        sigma = np.sqrt(((Y - model.predict(X)) ** 2).mean(axis=0))
    else:
        _, cfg, sigma = best
        model = fit_dnn(X, Y, cfg)
    return DnnForecast(model.predict(x_star)[0], sigma, pd.DataFrame(rows))
