"""Conditional neural process for one regime's (x, 24-hour price) pairs.

Encoder ``h(x, y) -> r_i`` and decoder ``g(x*, r) -> (mu, raw scale)`` are
plain ReLU MLPs in float64. The context representation is the element-wise
mean of the ``r_i``. Contexts are put in a canonical (lexicographic) order
before encoding so the mean is bit-identical under any permutation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from .assoc import standardization
from .mixture import GaussianForecast

VAR_FLOOR = 1e-6
LOG_2PI = math.log(2 * math.pi)


class CnpError(ValueError):
    pass


@dataclass(frozen=True)
class CnpConfig:
    d: int = 128
    hidden: int = 128
    epochs: int = 300
    steps_per_epoch: int = 16
    lr: float = 1e-3
    context_min: int = 3
    context_frac: float = 0.8
    seed: int = 0


@dataclass(frozen=True)
class CnpModel:
    encoder: tuple  # ((W, b), ...), W of shape (in, out)
    decoder: tuple
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    config: CnpConfig = CnpConfig()
    regime: int = 0
    loss_trace: tuple = field(default=(), compare=False)

    @property
    def n_features(self) -> int:
        return self.x_mean.size

    @property
    def horizon(self) -> int:
        return self.y_mean.size

    def tensors(self, requires_grad=False):
        out = []
        for W, b in self.encoder + self.decoder:
            out += [torch.tensor(W, requires_grad=requires_grad),
                    torch.tensor(b, requires_grad=requires_grad)]
        return out

    def with_tensors(self, params) -> "CnpModel":
        arr = [p.detach().numpy().copy() for p in params]
        n = len(self.encoder)
        pairs = tuple(zip(arr[0::2], arr[1::2]))
        return replace(self, encoder=pairs[:n], decoder=pairs[n:])

    def state(self) -> dict:
        out = {"x_mean": self.x_mean, "x_std": self.x_std, "y_mean": self.y_mean,
               "y_std": self.y_std, "regime": np.array(self.regime)}
        for tag, layers in (("enc", self.encoder), ("dec", self.decoder)):
            for i, (W, b) in enumerate(layers):
                out[f"{tag}_W{i}"], out[f"{tag}_b{i}"] = W, b
        return out

    @classmethod
    def from_state(cls, st: dict, config: CnpConfig = CnpConfig()) -> "CnpModel":
        def layers(tag):
            n = sum(1 for k in st if str(k).startswith(f"{tag}_W"))
            return tuple((np.asarray(st[f"{tag}_W{i}"]), np.asarray(st[f"{tag}_b{i}"]))
                         for i in range(n))
        return cls(layers("enc"), layers("dec"), np.asarray(st["x_mean"]), np.asarray(st["x_std"]),
                   np.asarray(st["y_mean"]), np.asarray(st["y_std"]), config, int(st["regime"]))


def _mlp(params, h):
    n = len(params) // 2
    for i in range(n):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n - 1:
            h = torch.relu(h)
    return h


def _split_params(params, n_enc):
    return params[: 2 * n_enc], params[2 * n_enc:]


def _canonical(xy: np.ndarray) -> np.ndarray:
    order = np.lexsort(xy.T[::-1])
    return xy[order]


def _encode(enc, xy: torch.Tensor) -> torch.Tensor:
    return _mlp(enc, xy).mean(dim=0)


def _decode(dec, x: torch.Tensor, r: torch.Tensor):
    x = torch.atleast_2d(x)
    out = _mlp(dec, torch.cat([x, r.expand(x.shape[0], -1)], dim=1))
    H = out.shape[1] // 2
    return out[:, :H], F.softplus(out[:, H:]) + VAR_FLOOR


def _nll(mu, var, y):
    """Per-row Gaussian NLL summed over hours."""
    return (0.5 * (LOG_2PI + torch.log(var)) + (y - mu) ** 2 / (2 * var)).sum(dim=-1)


def init_model(n_features: int, horizon: int = 24, config: CnpConfig = CnpConfig(),
               rng: Optional[np.random.Generator] = None) -> CnpModel:
    rng = rng if rng is not None else np.random.default_rng(config.seed)

    def layers(sizes):
        out = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            bound = math.sqrt(6.0 / a)
            out.append((rng.uniform(-bound, bound, (a, b)), np.zeros(b)))
        # small last layer keeps initial predictions near the standardized mean
        W, b = out[-1]
        out[-1] = (W * 0.1, b)
        return tuple(out)

    h, d = config.hidden, config.d
    enc = layers((n_features + horizon, h, h, d))
    dec = layers((n_features + d, h, h, 2 * horizon))
    return CnpModel(enc, dec, np.zeros(n_features), np.ones(n_features),
                    np.zeros(horizon), np.ones(horizon), config)


def _check_pairs(X, Y, model: Optional[CnpModel] = None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] != Y.shape[0]:
        raise CnpError("context inputs and outputs differ in length")
    if X.shape[0] == 0:
        raise CnpError("context is empty")
    if model is not None and (X.shape[1] != model.n_features or Y.shape[1] != model.horizon):
        raise CnpError(f"expected ({model.n_features}, {model.horizon}) pairs, "
                       f"got ({X.shape[1]}, {Y.shape[1]})")
    return X, Y


def encode(model: CnpModel, X_ctx, Y_ctx) -> np.ndarray:
    """Context representation in standardized space."""
    X, Y = _check_pairs(X_ctx, Y_ctx, model)
    xy = np.hstack([(X - model.x_mean) / model.x_std, (Y - model.y_mean) / model.y_std])
    enc, _ = _split_params(model.tensors(), len(model.encoder))
    with torch.no_grad():
        return _encode(enc, torch.from_numpy(_canonical(xy))).numpy()


def decode(model: CnpModel, x_star_std, r) -> GaussianForecast:
    """Decoder output for a standardized query; the forecast is in standardized units."""
    x = np.asarray(x_star_std, dtype=float)
    r = np.asarray(r, dtype=float)
    if x.shape != (model.n_features,) or r.shape != (model.config.d,):
        raise CnpError(f"query must be ({model.n_features},) and r ({model.config.d},)")
    _, dec = _split_params(model.tensors(), len(model.encoder))
    with torch.no_grad():
        mu, var = _decode(dec, torch.from_numpy(x), torch.from_numpy(r))
    return GaussianForecast(mu[0].numpy(), var[0].numpy())


def nll(forecast: GaussianForecast, y) -> float:
    y = np.asarray(y, dtype=float)
    var = np.asarray(forecast.var)
    return float((0.5 * (LOG_2PI + np.log(var)) + (y - forecast.mean) ** 2 / (2 * var)).sum())


def predict(model: CnpModel, X_ctx, Y_ctx, x_star, max_context: Optional[int] = None):
    """Forecast in price units for one query (or one per row of ``x_star``).

    With ``max_context`` only the last rows of the context are used, so
    callers should pass contexts in chronological order.
    """
    X, Y = _check_pairs(X_ctx, Y_ctx, model)
    if max_context is not None and X.shape[0] > max_context:
        X, Y = X[-max_context:], Y[-max_context:]
    xs = np.asarray(x_star, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    if xs.shape[1] != model.n_features:
        raise CnpError(f"query has {xs.shape[1]} features, expected {model.n_features}")
    r = torch.from_numpy(encode(model, X, Y))
    _, dec = _split_params(model.tensors(), len(model.encoder))
    with torch.no_grad():
        mu, var = _decode(dec, torch.from_numpy((xs - model.x_mean) / model.x_std), r)
    mu = mu.numpy() * model.y_std + model.y_mean
    var = var.numpy() * model.y_std ** 2
    if single:
        return GaussianForecast(mu[0], var[0])
    return [GaussianForecast(m, v) for m, v in zip(mu, var)]


def task_loss(params, n_enc: int, ctx: torch.Tensor, tx: torch.Tensor, ty: torch.Tensor):
    """Mean target NLL given standardized context rows ``[x, y]`` and targets."""
    enc, dec = _split_params(params, n_enc)
    r = _encode(enc, ctx)
    mu, var = _decode(dec, tx, r)
    return _nll(mu, var, ty).mean()


def context_range(m: int, config: CnpConfig = CnpConfig()):
    lo = min(config.context_min, m - 1)
    hi = min(math.ceil(config.context_frac * m), m - 1)
    return lo, max(lo, hi)


def train_cnp(X, Y, config: CnpConfig = CnpConfig(), regime: int = 0) -> CnpModel:
    X, Y = _check_pairs(X, Y)
    m = X.shape[0]
    if m < 8:
        raise CnpError(f"need at least 8 pairs to train, got {m}")
    rng = np.random.default_rng(config.seed)
    model = init_model(X.shape[1], Y.shape[1], config, rng)
    xm, xsd = standardization(X)
    ym, ysd = standardization(Y)
    model = replace(model, x_mean=xm, x_std=xsd, y_mean=ym, y_std=ysd, regime=regime)
    Xs = torch.from_numpy((X - xm) / xsd)
    Ys = torch.from_numpy((Y - ym) / ysd)
    XY = torch.cat([Xs, Ys], dim=1)

    params = model.tensors(requires_grad=True)
    opt = torch.optim.Adam(params, lr=config.lr)
    lo, hi = context_range(m, config)
    n_enc = len(model.encoder)
    trace = []
    for _ in range(config.epochs):
        tot = 0.0
        for _ in range(config.steps_per_epoch):
            nc = int(rng.integers(lo, hi + 1))
            perm = torch.from_numpy(rng.permutation(m))
            ci, ti = perm[:nc], perm[nc:]
            loss = task_loss(params, n_enc, XY[ci], Xs[ti], Ys[ti])
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += loss.item()
        trace.append(tot / config.steps_per_epoch)
    return replace(model.with_tensors(params), loss_trace=tuple(trace))


SEARCH_SPACE = {"d": (64, 128), "lr": (1e-3, 3e-4), "hidden": (64, 128)}


def validation_nll(model: CnpModel, X_ctx, Y_ctx, X_val, Y_val) -> float:
    fc = predict(model, X_ctx, Y_ctx, X_val)
    return float(np.mean([nll(f, y) for f, y in zip(fc, Y_val)]))


def search_cnp(X, Y, base: CnpConfig = CnpConfig(), trials: int = 8, val_fraction: float = 0.2,
               seed: int = 0, regime: int = 0):
    """Seeded random search over SEARCH_SPACE, scored by validation NLL on
    the chronologically last rows; the winner is refit on all pairs."""
    X, Y = _check_pairs(X, Y)
    m = X.shape[0]
    n_val = max(1, int(round(val_fraction * m)))
    if m - n_val < 8:
        return train_cnp(X, Y, base, regime), pd.DataFrame()
    grid = list(itertools.product(*SEARCH_SPACE.values()))
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(grid))[:trials]
    rows = []
    for t, gi in enumerate(picks):
        cfg = replace(base, **dict(zip(SEARCH_SPACE, grid[gi])), seed=base.seed + t)
        mdl = train_cnp(X[:-n_val], Y[:-n_val], cfg, regime)
        rows.append({**dict(zip(SEARCH_SPACE, grid[gi])), "seed": cfg.seed,
                     "val_nll": validation_nll(mdl, X[:-n_val], Y[:-n_val], X[-n_val:], Y[-n_val:])})
    trials_df = pd.DataFrame(rows)
    best = trials_df.loc[trials_df["val_nll"].idxmin()]
    cfg = replace(base, d=int(best["d"]), lr=float(best["lr"]), hidden=int(best["hidden"]),
                  seed=int(best["seed"]))
    return train_cnp(X, Y, cfg, regime), trials_df


def fallback_map(counts, means, min_pairs: int = 8) -> dict:
    """Map each regime to the regime whose CNP forecasts it.

    Regimes with fewer than ``min_pairs`` training pairs borrow the model of
    the nearest (by emission mean) regime that has enough.
    """
    counts = np.asarray(counts)
    means = np.asarray(means, dtype=float)
    ok = np.flatnonzero(counts >= min_pairs)
    if ok.size == 0:
        raise CnpError(f"no regime has {min_pairs} training pairs")
    return {k: int(k) if counts[k] >= min_pairs
            else int(ok[np.argmin(np.abs(means[ok] - means[k]))]) for k in range(counts.size)}
