"""TOPSIS ranking with per-criterion directions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd


class TopsisError(ValueError):
    pass


@dataclass(frozen=True)
class DecisionMatrix:
    alternatives: tuple
    criteria: tuple
    values: np.ndarray
    minimize: np.ndarray  # bool per criterion
    weights: Optional[np.ndarray] = None  # equal if None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m, n = len(self.alternatives), len(self.criteria)
        if vals.shape != (m, n):
            raise TopsisError(f"values must be {m}x{n}, got {vals.shape}")
        if not np.isfinite(vals).all():
            raise TopsisError("values must be finite")
        mins = np.broadcast_to(np.asarray(self.minimize, dtype=bool), (n,)).copy()
        w = np.full(n, 1.0 / n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (n,) or (w <= 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise TopsisError("weights must be positive and sum to 1")
        if (np.abs(vals).sum(axis=0) == 0).any():
            raise TopsisError("a criterion column is all zero")
        if len(set(self.alternatives)) != m:
            raise TopsisError("alternative names must be unique")
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(self, "criteria", tuple(self.criteria))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "minimize", mins)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_long(cls, df: pd.DataFrame) -> "DecisionMatrix":
        """From rows (alternative, criterion, value, direction[, weight])."""
        need = {"alternative", "criterion", "value", "direction"}
        if not need <= set(df.columns):
            raise TopsisError(f"missing columns: {sorted(need - set(df.columns))}")
        alts = list(dict.fromkeys(df["alternative"]))
        crits = list(dict.fromkeys(df["criterion"]))
        wide = df.pivot(index="alternative", columns="criterion", values="value").loc[alts, crits]
        meta = df.drop_duplicates("criterion").set_index("criterion").loc[crits]
        direction = meta["direction"].str.lower()
        if not direction.isin(["minimize", "maximize", "min", "max"]).all():
            raise TopsisError("direction must be minimize or maximize")
        weights = None
        if "weight" in df.columns:
            weights = meta["weight"].to_numpy(dtype=float)
        return cls(tuple(alts), tuple(crits), wide.to_numpy(dtype=float),
                   direction.str.startswith("min").to_numpy(), weights)


@dataclass(frozen=True)
class TopsisResult:
    alternatives: tuple
    closeness: np.ndarray
    order: tuple  # alternative names, best first
    s_plus: np.ndarray
    s_minus: np.ndarray

    def as_frame(self) -> pd.DataFrame:
        rank = {a: i + 1 for i, a in enumerate(self.order)}
        return pd.DataFrame({"alternative": self.alternatives, "closeness": self.closeness,
                             "rank": [rank[a] for a in self.alternatives]})


def rank(dm: DecisionMatrix) -> TopsisResult:
    X = dm.values
    R = X / np.sqrt((X ** 2).sum(axis=0))
    V = R * dm.weights
    ideal = np.where(dm.minimize, V.min(axis=0), V.max(axis=0))
    anti = np.where(dm.minimize, V.max(axis=0), V.min(axis=0))
    s_plus = np.sqrt(((V - ideal) ** 2).sum(axis=1))
    s_minus = np.sqrt(((V - anti) ** 2).sum(axis=1))
    tot = s_plus + s_minus
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(tot > 0, s_minus / tot, 0.5)
    order = sorted(range(len(dm.alternatives)), key=lambda i: (-c[i], dm.alternatives[i]))
    return TopsisResult(dm.alternatives, c, tuple(dm.alternatives[i] for i in order),
                        s_plus, s_minus)


ACCURACY = ("MAE", "RMSE", "MAPE", "SMAPE")
OPERATIONAL = ("profit_I", "profit_II", "profit_III", "cost_IV")
REGRET = ("regret_I", "regret_II", "regret_III", "regret_IV")


def standard_matrix(alternatives: Sequence[str], accuracy, operational, regret,
                    regret_iv_minimize: bool = True) -> DecisionMatrix:
    """The 12-criterion layout: accuracy, mean operational value, mean regret.

    ``regret_iv_minimize`` controls the Case IV regret column only; see the
    README for when the reference scores need it flipped.
    """
    vals = np.hstack([np.asarray(accuracy, float), np.asarray(operational, float),
                      np.asarray(regret, float)])
    minimize = np.array([True] * 4 + [False, False, False, True] + [True] * 3
                        + [regret_iv_minimize])
    return DecisionMatrix(tuple(alternatives), ACCURACY + OPERATIONAL + REGRET, vals, minimize)
