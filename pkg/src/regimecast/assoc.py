"""Regime association: MLP regime classifier, soft weights and dependence
diagnostics (mutual information, ANOVA F, PCA, classification report)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import torch
from scipy import stats

MI_BINS = 16


class AssocError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: tuple = (64, 64)
    epochs: int = 200
    lr: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.2
    batch_size: int = 64
    class_weight: Optional[str] = None  # None or "balanced"

    def __post_init__(self):
        if not 0 <= self.val_fraction < 1:
            raise AssocError("val_fraction must be in [0, 1)")
        if self.class_weight not in (None, "balanced"):
            raise AssocError(f"unknown class_weight {self.class_weight!r}")


@dataclass(frozen=True)
class Classifier:
    layers: tuple  # ((W, b), ...) with W of shape (in, out)
    mean: np.ndarray
    std: np.ndarray
    K: int
    holdout: tuple = ()  # row indices of the training call kept out of fitting
    loss_trace: tuple = field(default=(), compare=False)

    @property
    def n_features(self) -> int:
        return self.mean.size

    def logits(self, X) -> np.ndarray:
        h = (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.std
        for i, (W, b) in enumerate(self.layers):
            h = h @ W + b
            if i < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        return h

    def state(self) -> dict:
        out = {"mean": self.mean, "std": self.std, "K": np.array(self.K),
               "holdout": np.asarray(self.holdout, dtype=int)}
        for i, (W, b) in enumerate(self.layers):
            out[f"W{i}"], out[f"b{i}"] = W, b
        return out

    @classmethod
    def from_state(cls, st: dict) -> "Classifier":
        n = sum(1 for k in st if str(k).startswith("W"))
        layers = tuple((np.asarray(st[f"W{i}"]), np.asarray(st[f"b{i}"])) for i in range(n))
        return cls(layers, np.asarray(st["mean"]), np.asarray(st["std"]), int(st["K"]),
                   tuple(int(i) for i in np.asarray(st["holdout"])))


def standardization(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _split(z: np.ndarray, frac: float, rng: np.random.Generator):
    """Per-class holdout so every class keeps at least one training row."""
    hold = []
    for c in np.unique(z):
        idx = np.flatnonzero(z == c)
        n_out = min(int(np.floor(frac * idx.size)), idx.size - 1)
        if n_out > 0:
            hold.extend(rng.choice(idx, n_out, replace=False).tolist())
    hold = np.sort(np.asarray(hold, dtype=int))
    train = np.setdiff1d(np.arange(z.size), hold)
    return train, hold


def _init_layers(sizes, rng):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)  # He-uniform for ReLU
        layers.append((rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)))
    return layers


def fit_regime_classifier(X, z, K: Optional[int] = None,
                          config: ClassifierConfig = ClassifierConfig()) -> Classifier:
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=int)
    if X.ndim != 2 or z.shape != (X.shape[0],):
        raise AssocError("X must be m x d and z length m")
    K = int(z.max()) + 1 if K is None else int(K)
    if z.min() < 0 or z.max() >= K:
        raise AssocError(f"labels must lie in 0..{K - 1}")
    counts = np.bincount(z, minlength=K)
    if (counts == 0).any():
        raise AssocError(f"class(es) {np.flatnonzero(counts == 0).tolist()} absent from labels")
    if X.shape[0] < 5 * K:
        raise AssocError(f"need at least {5 * K} rows for {K} classes")

    rng = np.random.default_rng(config.seed)
    train, hold = _split(z, config.val_fraction, rng)
    mean, std = standardization(X[train])
    if K == 1:
        W = np.zeros((X.shape[1], 1))
        return Classifier(((W, np.zeros(1)),), mean, std, 1, tuple(hold.tolist()))

    sizes = (X.shape[1], *config.hidden, K)
    params = []
    for W, b in _init_layers(sizes, rng):
        params += [torch.tensor(W, requires_grad=True), torch.tensor(b, requires_grad=True)]
    opt = torch.optim.Adam(params, lr=config.lr)

    Xs = torch.tensor((X[train] - mean) / std)
    zt = torch.tensor(z[train])
    cw = None
    if config.class_weight == "balanced":
        tc = np.bincount(z[train], minlength=K)
        cw = torch.tensor(train.size / (K * np.maximum(tc, 1)))
    n = train.size
    trace = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        tot = 0.0
        for s in range(0, n, config.batch_size):
            bi = torch.from_numpy(perm[s:s + config.batch_size])
            h = Xs[bi]
            for i in range(0, len(params), 2):
                h = h @ params[i] + params[i + 1]
                if i < len(params) - 2:
                    h = torch.relu(h)
            loss = torch.nn.functional.cross_entropy(h, zt[bi], weight=cw)
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += loss.item() * bi.numel()
        trace.append(tot / n)

    layers = tuple((params[i].detach().numpy().copy(), params[i + 1].detach().numpy().copy())
                   for i in range(0, len(params), 2))
    return Classifier(layers, mean, std, K, tuple(hold.tolist()), tuple(trace))


def softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict_weights(clf: Classifier, x) -> np.ndarray:
    """Regime probabilities for one feature vector (or each row of a matrix)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != clf.n_features or x.ndim > 2:
        raise AssocError(f"expected {clf.n_features} features, got shape {x.shape}")
    p = softmax(clf.logits(x))
    return p[0] if x.ndim == 1 else p


@dataclass(frozen=True)
class DependenceReport:
    mi: Optional[np.ndarray] = None  # nats, per feature
    f_stat: Optional[np.ndarray] = None
    f_pvalue: Optional[np.ndarray] = None
    per_class: Optional[pd.DataFrame] = None  # precision, recall, f1, support
    weighted_f1: Optional[float] = None
    accuracy: Optional[float] = None

    def merge(self, other: "DependenceReport") -> "DependenceReport":
        pick = lambda a, b: b if a is None else a  # noqa: E731
        return DependenceReport(*(pick(getattr(self, f), getattr(other, f))
                                  for f in self.__dataclass_fields__))


def report_from_labels(z_true, z_pred, K: Optional[int] = None) -> DependenceReport:
    z_true = np.asarray(z_true, dtype=int)
    z_pred = np.asarray(z_pred, dtype=int)
    if z_true.size == 0 or z_true.shape != z_pred.shape:
        raise AssocError("need equal-length nonempty label vectors")
    K = int(max(z_true.max(), z_pred.max())) + 1 if K is None else K
    cm = np.zeros((K, K), dtype=int)
    np.add.at(cm, (z_true, z_pred), 1)
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    table = pd.DataFrame({"precision": precision, "recall": recall, "f1": f1,
                          "support": support}, index=pd.Index(range(K), name="regime"))
    wf1 = float((f1 * support).sum() / support.sum())
    return DependenceReport(per_class=table, weighted_f1=wf1, accuracy=float(tp.sum() / z_true.size))


def classification_report(clf: Classifier, X, z) -> DependenceReport:
    pred = predict_weights(clf, np.atleast_2d(X)).argmax(axis=1)
    return report_from_labels(z, pred, clf.K)


def _bin_codes(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def mutual_information(x, z, bins: int = MI_BINS) -> float:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=int)
    b = _bin_codes(x, bins)
    joint = np.zeros((bins, int(z.max()) + 1))
    np.add.at(joint, (b, z), 1.0)
    joint /= joint.sum()
    pb = joint.sum(axis=1, keepdims=True)
    pz = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float((joint[nz] * np.log(joint[nz] / (pb @ pz)[nz])).sum())
    return max(mi, 0.0)


def anova_f(X, z):
    """One-way ANOVA F per column; constant columns give F=0, p=1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1:
        X = X.T
    z = np.asarray(z, dtype=int)
    classes = np.unique(z)
    K, m = classes.size, X.shape[0]
    grand = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c in classes:
        g = X[z == c]
        mu = g.mean(axis=0)
        between += g.shape[0] * (mu - grand) ** 2
        within += ((g - mu) ** 2).sum(axis=0)
    msb = between / (K - 1)
    msw = within / (m - K)
    # exact zeros where a column has no spread at all
    scale = np.abs(X).max(axis=0) + 1.0
    msb = np.where(msb <= 1e-24 * scale ** 2, 0.0, msb)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(msw > 0, msb / msw, np.where(msb > 0, np.inf, 0.0))
    p = stats.f.sf(F, K - 1, m - K)
    return F, p


def feature_dependence(X, z, bins: int = MI_BINS) -> DependenceReport:
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=int)
    K = np.unique(z).size
    if K < 2:
        raise AssocError("need at least two regimes for dependence statistics")
    if X.shape[0] < 2 * K or X.shape[0] <= K:
        raise AssocError(f"need at least {2 * K} rows")
    mi = np.array([mutual_information(X[:, j], z, bins) for j in range(X.shape[1])])
    F, p = anova_f(X, z)
    return DependenceReport(mi=mi, f_stat=F, f_pvalue=p)


@dataclass(frozen=True)
class PcaResult:
    coords: np.ndarray
    explained: np.ndarray  # variance fractions of the kept components
    components: np.ndarray  # dims x d
    mean: np.ndarray
    scale: np.ndarray


def pca_project(X, dims: int = 3, standardize: bool = True) -> PcaResult:
    X = np.asarray(X, dtype=float)
    m, d = X.shape
    if dims not in (2, 3):
        raise AssocError("dims must be 2 or 3")
    if m <= dims:
        raise AssocError(f"need more than {dims} rows")
    mean = X.mean(axis=0)
    scale = standardization(X)[1] if standardize else np.ones(d)
    Xc = (X - mean) / scale
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    rank = int((s > s.max() * max(m, d) * np.finfo(float).eps).sum()) if s.size else 0
    if dims > rank:
        raise AssocError(f"dims={dims} exceeds data rank {rank}")
    var = s ** 2
    return PcaResult(Xc @ Vt[:dims].T, var[:dims] / var.sum(), Vt[:dims], mean, scale)
