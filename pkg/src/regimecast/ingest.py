"""Market data ingestion, feature construction and synthetic site profiles.

A :class:`MarketTable` holds three ``n x 24`` matrices (hourly price, residual
load forecast, renewable production forecast) indexed by consecutive calendar
days. Every model in the package consumes the same 248-wide feature layout::

    [day index]                      1
    [P(i-1), P(i-2), P(i-3), P(i-7)] 96
    [L(i), L(i-1), L(i-7)]           72
    [R(i), R(i-1), R(i-7)]           72
    [day-of-week one-hot]            7
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

HOURS = 24
N_FEATURES = 248
MAX_LAG = 7

PRICE_LAGS = (1, 2, 3, 7)
LOAD_LAGS = (0, 1, 7)
RENEWABLE_LAGS = (0, 1, 7)

DEFAULT_SCHEMA = {
    "timestamp": "timestamp",
    "price": "price_eur_mwh",
    "load": "residual_load_mwh",
    "trp": "renewable_mwh",
}


class MarketDataError(ValueError):
    """Raised for malformed or incomplete market files."""


class LagUnavailableError(IndexError):
    pass


@dataclass(frozen=True)
class MarketTable:
    days: np.ndarray  # datetime64[D], consecutive
    price: np.ndarray
    load: np.ndarray
    trp: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.days)
        for name in ("price", "load", "trp"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n, HOURS):
                raise MarketDataError(f"{name} has shape {arr.shape}, expected ({n}, {HOURS})")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        days = np.asarray(self.days, dtype="datetime64[D]")
        if n > 1 and np.any(np.diff(days) != np.timedelta64(1, "D")):
            raise MarketDataError("days must be consecutive and strictly increasing")
        days.setflags(write=False)
        object.__setattr__(self, "days", days)

    @property
    def n(self) -> int:
        return len(self.days)

    def day_index(self, date) -> int:
        d = np.datetime64(date, "D")
        i = int((d - self.days[0]).astype(int))
        if not 0 <= i < self.n:
            raise KeyError(f"{date} outside table range {self.days[0]}..{self.days[-1]}")
        return i

    def weekday(self, i: int) -> int:
        """Monday = 0."""
        return int((self.days[i].astype("datetime64[D]").astype(int) + 3) % 7)

    def daily_mean_price(self) -> np.ndarray:
        return self.price.mean(axis=1)

    def as_of(self, i: int) -> "MarketTable":
        """Information set available when forecasting day ``i``.

        Rows after ``i`` are dropped and the prices of day ``i`` are masked
        with NaN; load and renewable forecasts for day ``i`` stay visible
        since they are published before the day-ahead auction.
        """
        price = self.price[: i + 1].copy()
        price[i] = np.nan
        return MarketTable(self.days[: i + 1], price, self.load[: i + 1], self.trp[: i + 1],
                           meta={**self.meta, "as_of": str(self.days[i])})

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.days.astype("int64").tobytes())
        for arr in (self.price, self.load, self.trp):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _parse_timestamp(raw: str) -> dt.datetime:
    s = str(raw).strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    try:
        ts = dt.datetime.fromisoformat(s)
    except ValueError as exc:
        raise MarketDataError(f"unparseable timestamp {raw!r}") from exc
    # wall-clock time: DST shifts show up as a missing or duplicated hour
    return ts.replace(tzinfo=None)


def load_market_csv(path, schema: dict | None = None) -> MarketTable:
    """Read an hourly market CSV into a cleaned :class:`MarketTable`.

    Duplicated wall-clock hours (autumn DST change) are averaged, missing
    hours are linearly interpolated within their day, and a calendar day
    without any rows is an error.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MarketDataError(f"malformed CSV {path}: {exc}") from exc

    missing = [col for col in schema.values() if col not in df.columns]
    if missing:
        raise MarketDataError(f"{path}: missing columns {missing}")
    if df.empty:
        raise MarketDataError(f"{path}: no rows")

    stamps = [_parse_timestamp(v) for v in df[schema["timestamp"]]]
    bad = [s for s in stamps if s.minute or s.second or s.microsecond]
    if bad:
        raise MarketDataError(f"non-hourly timestamp {bad[0].isoformat()}")

    values = {}
    for key in ("price", "load", "trp"):
        values[key] = pd.to_numeric(df[schema[key]], errors="coerce").to_numpy(float)

    frame = pd.DataFrame({
        "date": [s.date() for s in stamps],
        "hour": [s.hour for s in stamps],
        **values,
    })
    n_dupes = int(frame.duplicated(["date", "hour"]).sum())
    grouped = frame.groupby(["date", "hour"], sort=True).mean()

    dates = sorted(set(frame["date"]))
    first, last = dates[0], dates[-1]
    n_days = (last - first).days + 1
    present = set(dates)
    for k in range(n_days):
        d = first + dt.timedelta(days=k)
        if d not in present:
            raise MarketDataError(f"no data for day {d.isoformat()}")

    mats = {key: np.full((n_days, HOURS), np.nan) for key in ("price", "load", "trp")}
    for (d, h), row in grouped.iterrows():
        i = (d - first).days
        for key in mats:
            mats[key][i, h] = row[key]

    repaired = []
    hours = np.arange(HOURS)
    for key, mat in mats.items():
        for i in range(n_days):
            gaps = np.isnan(mat[i])
            if gaps.all():
                d = first + dt.timedelta(days=i)
                raise MarketDataError(f"no {key} values for day {d.isoformat()}")
            if gaps.any():
                mat[i, gaps] = np.interp(hours[gaps], hours[~gaps], mat[i, ~gaps])
                d = first + dt.timedelta(days=i)
                repaired.extend((d.isoformat(), int(h), key) for h in hours[gaps])

    meta = {
        "source": str(path),
        "cleaning": "duplicate hours averaged; missing hours linearly interpolated within day",
        "duplicates_averaged": n_dupes,
        "repaired_cells": repaired,
    }
    days = np.arange(np.datetime64(first, "D"), np.datetime64(last, "D") + 1)
    return MarketTable(days, mats["price"], mats["load"], mats["trp"], meta=meta)


def write_market_csv(table: MarketTable, path) -> None:
    stamps = (table.days[:, None].astype("datetime64[h]") + np.arange(HOURS).astype("timedelta64[h]"))
    df = pd.DataFrame({
        "timestamp": pd.to_datetime(stamps.ravel()).strftime("%Y-%m-%dT%H:%M:%S"),
        DEFAULT_SCHEMA["price"]: table.price.ravel(),
        DEFAULT_SCHEMA["load"]: table.load.ravel(),
        DEFAULT_SCHEMA["trp"]: table.trp.ravel(),
    })
    df.to_csv(path, index=False)


def build_features(table: MarketTable, i: int) -> np.ndarray:
    if i < MAX_LAG:
        raise LagUnavailableError(f"day {i} needs {MAX_LAG} days of lags")
    if i >= table.n:
        raise LagUnavailableError(f"day {i} beyond table of {table.n} days")
    parts = [np.array([float(i)])]
    parts += [table.price[i - lag] for lag in PRICE_LAGS]
    parts += [table.load[i - lag] for lag in LOAD_LAGS]
    parts += [table.trp[i - lag] for lag in RENEWABLE_LAGS]
    dow = np.zeros(7)
    dow[table.weekday(i)] = 1.0
    parts.append(dow)
    x = np.concatenate(parts)
    assert x.shape == (N_FEATURES,)
    return x


def feature_names() -> list[str]:
    names = ["day_index"]
    for lag in PRICE_LAGS:
        names += [f"price_lag{lag}_h{h}" for h in range(HOURS)]
    for lag in LOAD_LAGS:
        names += [f"load_lag{lag}_h{h}" for h in range(HOURS)]
    for lag in RENEWABLE_LAGS:
        names += [f"trp_lag{lag}_h{h}" for h in range(HOURS)]
    names += ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]
    return names


def build_training_set(table: MarketTable, target_day: int, window: int = 1460):
    """Inputs ``(window, 248)`` and targets ``(window, 24)`` for days
    ``target_day - window .. target_day - 1``; the target day is excluded."""
    start = target_day - window
    if window < 1 or start < MAX_LAG:
        raise LagUnavailableError(
            f"target day {target_day} with window {window} needs history back to day {start}")
    if target_day > table.n:
        raise LagUnavailableError(f"target day {target_day} beyond table of {table.n} days")
    days = range(start, target_day)
    X = np.stack([build_features(table, i) for i in days])
    Y = np.stack([table.price[i] for i in days])
    return X, Y


@dataclass(frozen=True)
class SiteConfig:
    peak_solar: float = 1.0  # MWh at the sine apex
    daylight_start: float = 6.0
    daylight_end: float = 18.0
    daily_demand: float = 24.0  # MWh
    profile: str = "double_peak"  # or "uniform"
    seasonal: bool = False  # scale solar peak with day of year

    def __post_init__(self):
        if self.peak_solar < 0 or self.daily_demand < 0:
            raise ValueError("solar capacity and demand total must be non-negative")
        if self.daylight_end <= self.daylight_start:
            raise ValueError("daylight window is empty")
        if self.profile not in ("double_peak", "uniform"):
            raise ValueError(f"unknown demand profile {self.profile!r}")


@dataclass(frozen=True)
class SiteProfiles:
    demand: np.ndarray
    solar: np.ndarray
    residual: np.ndarray


# morning and evening peaks on a flat base, normalized in simulate_site_profiles
_DOUBLE_PEAK = (
    0.6
    + 0.5 * np.exp(-0.5 * ((np.arange(HOURS) - 8.0) / 1.5) ** 2)
    + 0.8 * np.exp(-0.5 * ((np.arange(HOURS) - 19.0) / 2.0) ** 2)
)


def simulate_site_profiles(date, config: SiteConfig = SiteConfig()) -> SiteProfiles:
    hours = np.arange(HOURS, dtype=float)
    span = config.daylight_end - config.daylight_start
    phase = (hours - config.daylight_start) / span
    solar = np.where((phase > 0) & (phase < 1), np.sin(np.pi * phase), 0.0)
    peak = config.peak_solar
    if config.seasonal:
        doy = pd.Timestamp(np.datetime64(date, "D")).dayofyear
        peak *= 0.65 + 0.35 * np.cos(2 * np.pi * (doy - 172) / 365.25)
    solar = np.clip(peak * solar, 0.0, None)

    shape = np.ones(HOURS) if config.profile == "uniform" else _DOUBLE_PEAK
    demand = config.daily_demand * shape / shape.sum()
    return SiteProfiles(demand=demand, solar=solar, residual=demand - solar)


def synthetic_market(n_days: int, seed: int = 0, start: str = "2019-01-01",
                     levels=(40.0, 95.0, 170.0), persistence: float = 0.97) -> MarketTable:
    """Regime-switching toy market with daily and weekly structure.

    Prices respond to residual load and renewables, and a persistent hidden
    regime shifts the price level; this gives the segmentation something to
    find while keeping the lag features informative.
    """
    rng = np.random.default_rng(seed)
    k = len(levels)
    regime = np.empty(n_days, dtype=int)
    regime[0] = 0
    for t in range(1, n_days):
        if rng.random() < persistence:
            regime[t] = regime[t - 1]
        else:
            regime[t] = rng.choice([r for r in range(k) if r != regime[t - 1]])

    hours = np.arange(HOURS)
    days = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days)
    weekday = (days.astype(int) + 3) % 7
    doy = np.array([pd.Timestamp(d).dayofyear for d in days])

    solar_shape = np.clip(np.sin(np.pi * (hours - 6) / 12), 0, None)
    season = 0.6 + 0.4 * np.cos(2 * np.pi * (doy - 172) / 365.25)
    wind = 12000 + 5000 * np.cumsum(rng.normal(0, 0.25, n_days)).clip(-2, 2)
    trp = (wind[:, None] + 25000 * season[:, None] * solar_shape[None, :]
           + rng.normal(0, 1500, (n_days, HOURS)))
    trp = np.clip(trp, 1000, None)

    gross = (55000 + 9000 * np.exp(-0.5 * ((hours - 9) / 2.5) ** 2)
             + 11000 * np.exp(-0.5 * ((hours - 19) / 2.5) ** 2))
    weekend = np.where(weekday >= 5, 0.85, 1.0)
    demand = gross[None, :] * weekend[:, None] + rng.normal(0, 1200, (n_days, HOURS))
    load = demand - trp

    level = np.asarray(levels)[regime]
    price = (level[:, None] * (0.55 + 0.45 * load / 40000.0)
             + rng.normal(0, 4.0, (n_days, HOURS)))
    table = MarketTable(days, price, load, trp,
                        meta={"source": "synthetic", "seed": seed, "regimes": regime.tolist()})
    return table
