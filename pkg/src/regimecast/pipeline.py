"""Rolling evaluation: segment, classify, train, predict, dispatch, evaluate, rank.

Each evaluated day only ever sees ``table.as_of(day)``. Models are refit on
the first evaluated day of every re-segmentation block and reused for the
rest of the block; blocks are independent and may run in parallel.
"""

from __future__ import annotations

import json
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import torch

from . import __version__
from .artifacts import save_classifier, save_cnp, save_segmentation, sha256_file
from .assoc import fit_regime_classifier, predict_weights
from .bench import BenchError, dnn_fit_predict, lear_fit_predict
from .cnp import fallback_map, predict, search_cnp, train_cnp
from .config import RunConfig, dump_config, from_dict
from .dispatch import CASES, RealInputs, perfect_foresight, plan, realized_value
from .ingest import (HOURS, MarketTable, build_features, build_training_set, load_market_csv,
                     simulate_site_profiles, synthetic_market)
from .metrics import (MetricError, crps_mixture, dm_test, friedman_nemenyi, interval_scores,
                      point_errors)
from .mixture import aggregate, check_consistent, interval
from .regime import compress_regimes, fit_segmentation
from .topsis import TopsisError, rank, standard_matrix

log = logging.getLogger(__name__)

MODELS = ("R-NP", "DNN", "LEAR")
PRICE_SCALE = 1e-3  # EUR/MWh -> EUR/kWh for the kWh-sized battery
TOL = 1e-7


class PipelineError(RuntimeError):
    def __init__(self, stage: str, day: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed on {day}: {cause}")
        self.stage, self.day, self.cause = stage, day, cause


def substream(seed: int, *names) -> int:
    """Deterministic child seed for a named stage, e.g. ("cnp", day, regime)."""
    key = tuple(zlib.crc32(str(n).encode()) for n in names)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def load_table(cfg: RunConfig) -> MarketTable:
    if cfg.data.path:
        return load_market_csv(cfg.data.path)
    return synthetic_market(cfg.data.synthetic_days, seed=cfg.data.synthetic_seed)


def evaluation_days(table: MarketTable, cfg: RunConfig) -> list[int]:
    ev = cfg.evaluation
    start = table.day_index(ev.start) if ev.start else table.n - ev.days
    if start - ev.window < 7:
        raise ValueError(f"evaluation start {table.days[max(start, 0)]} leaves less than "
                         f"{ev.window} days of history")
    if start + ev.days > table.n:
        raise ValueError("evaluation span runs past the end of the data")
    return list(range(start, start + ev.days, ev.stride))


def retrain_blocks(days: list[int], reseg_days: int) -> list[list[int]]:
    blocks: list[list[int]] = []
    for d in days:
        if not blocks or d - blocks[-1][0] >= reseg_days:
            blocks.append([d])
        else:
            blocks[-1].append(d)
    return blocks


def _guard(view: MarketTable, d: int) -> None:
    if view.n != d + 1 or not np.isnan(view.price[d]).all():
        raise AssertionError(f"information set for day {d} exposes the target prices")


@dataclass
class RegimeModels:
    day: int
    posterior: object
    labels: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    classifier: object
    cnps: dict
    fmap: dict
    timings: dict = field(default_factory=dict)


def _stage(name, date, timings):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, et, ev, tb):
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - self.t0
            if ev is not None and not isinstance(ev, PipelineError):
                raise PipelineError(name, date, ev) from ev
            return False
    return _Ctx()


def fit_regime_models(view: MarketTable, d: int, cfg: RunConfig) -> RegimeModels:
    date = str(view.days[d])
    t: dict = {}
    _guard(view, d)
    with _stage("segment", date, t):
        X, Y = build_training_set(view, d, cfg.evaluation.window)
        obs = Y.mean(axis=1)
        seg = fit_segmentation(obs, replace(cfg.segment, seed=substream(cfg.seed, "segment", d)))
        post = compress_regimes(seg.posterior, cfg.compress.kl_threshold, cfg.compress.min_mass,
                                obs=obs)
        z = np.asarray(post.z)
    with _stage("classify", date, t):
        clf = fit_regime_classifier(X, z, post.K, replace(
            cfg.classifier, seed=substream(cfg.seed, "classifier", d)))
    with _stage("train", date, t):
        counts = np.bincount(z, minlength=post.K)
        fmap = fallback_map(counts, post.mu, cfg.forecast.min_pairs)
        for k, target in fmap.items():
            if target != k:
                log.info("%s: regime %d has %d pairs, forecast with regime %d", date, k,
                         counts[k], target)
        cnps = {}
        for r in sorted(set(fmap.values())):
            c = replace(cfg.cnp, seed=substream(cfg.seed, "cnp", d, r))
            if cfg.forecast.search_trials > 0:
                cnps[r], _ = search_cnp(X[z == r], Y[z == r], c, cfg.forecast.search_trials,
                                        seed=c.seed, regime=r)
            else:
                cnps[r] = train_cnp(X[z == r], Y[z == r], c, regime=r)
    return RegimeModels(d, post, z, X, Y, clf, cnps, fmap, t)


def forecast_rnp(models: RegimeModels, view: MarketTable, d: int, cfg: RunConfig):
    """Mixture forecast for day ``d``; days since the refit join the
    contexts under their classifier label."""
    X, Y, z = models.X, models.Y, models.labels
    new = list(range(models.day, d))
    if new:
        Xn = np.stack([build_features(view, k) for k in new])
        zn = predict_weights(models.classifier, Xn).argmax(axis=1)
        X, Y, z = np.vstack([X, Xn]), np.vstack([Y, view.price[new]]), np.r_[z, zn]
    x_star = build_features(view, d)
    w = predict_weights(models.classifier, x_star)
    comps = []
    for r in range(len(w)):
        m = models.fmap[r]
        comps.append(predict(models.cnps[m], X[z == m], Y[z == m], x_star,
                             max_context=cfg.forecast.max_context))
    mix = aggregate(w, comps)
    check_consistent(mix)
    return mix


def _dispatch_rows(date, model, p_hat, sigma, actual, site, cfg: RunConfig):
    rows, sched_rows = [], []
    p_hat, sigma, actual = p_hat * PRICE_SCALE, sigma * PRICE_SCALE, actual * PRICE_SCALE
    real = RealInputs(actual, site.residual, site.solar, site.demand)
    for case in CASES:
        s = plan(case, p_hat, sigma, cfg.battery, cfg.strategy, r_hat=site.residual,
                 g_hat=site.solar, demand=site.demand)
        if not s.ok:
            raise RuntimeError(f"Case {case} LP for {model} ended with status {s.status}")
        pf = perfect_foresight(case, real, cfg.battery, cfg.strategy)
        value = realized_value(case, s, real, cfg.battery, cfg.strategy)
        viol = s.check(cfg.battery, site.demand if case == "IV" else None)
        if viol > TOL:
            raise AssertionError(f"Case {case} schedule violates constraints by {viol:.2e}")
        gap = value - pf.objective
        if (case == "IV" and gap < -TOL) or (case != "IV" and gap > TOL):
            raise AssertionError(f"Case {case} realized value beats perfect foresight by {gap:.2e}")
        rows.append({"date": date, "model": model, "case": case, "status": s.status,
                     "predicted_objective": s.objective, "realized": value,
                     "perfect_foresight": pf.objective, "regret": abs(gap),
                     "max_violation": viol, "simultaneous": s.simultaneous})
        for h in range(HOURS):
            sched_rows.append({"date": date, "model": model, "case": case, "hour": h,
                               "charge": s.charge[h], "discharge": s.discharge[h],
                               "soc": s.soc[h + 1]})
    return rows, sched_rows


def run_day(table: MarketTable, d: int, models: RegimeModels, cfg: RunConfig) -> dict:
    view = table.as_of(d)
    _guard(view, d)
    date = str(table.days[d])
    actual = table.price[d]
    t: dict = {}
    out = {"forecast": [], "daily": [], "dispatch": [], "schedule": [], "timings": t}
    preds = {}
    with _stage("predict", date, t):
        mix = forecast_rnp(models, view, d, cfg)
        lo, hi = interval(mix, cfg.evaluation.coverage)
        preds["R-NP"] = (mix.agg_mean, np.sqrt(mix.agg_var))
        for h in range(HOURS):
            row = {"date": date, "hour": h, "model": "R-NP", "mean": mix.agg_mean[h],
                   "variance": mix.agg_var[h], "lower": lo[h], "upper": hi[h],
                   "actual": actual[h]}
            for k in range(mix.K):
                row.update({f"w{k}": mix.weights[k], f"mean{k}": mix.means[k, h],
                            f"var{k}": mix.variances[k, h]})
            out["forecast"].append(row)
        iv = interval_scores(actual, lo, hi)
        crps = float(np.mean(crps_mixture(mix, actual, n_samples=20_000,
                                          seed=substream(cfg.seed, "crps", d))))
    with _stage("baselines", date, t):
        X, Y = build_training_set(view, d, cfg.evaluation.window)
        x_star = build_features(view, d)
        if cfg.baselines.lear:
            f = lear_fit_predict(view, d, cfg.evaluation.window, n_val=cfg.baselines.lear_val_days)
            preds["LEAR"] = (f.prediction, f.sigma)
        if cfg.baselines.dnn:
            dcfg = replace(cfg.dnn, seed=substream(cfg.seed, "dnn", d))
            f = dnn_fit_predict(X, Y, x_star, dcfg, cfg.baselines.dnn_trials, seed=dcfg.seed)
            preds["DNN"] = (f.prediction, f.sigma)
        for name in ("DNN", "LEAR"):
            if name in preds:
                for h in range(HOURS):
                    out["forecast"].append({"date": date, "hour": h, "model": name,
                                            "mean": preds[name][0][h], "actual": actual[h]})
    with _stage("dispatch", date, t):
        site = simulate_site_profiles(table.days[d], cfg.site)
        for name, (p_hat, sigma) in preds.items():
            rows, sched = _dispatch_rows(date, name, p_hat, sigma, actual, site, cfg)
            out["dispatch"] += rows
            out["schedule"] += sched
    for name, (p_hat, _) in preds.items():
        row = {"date": date, "model": name, **point_errors(actual, p_hat).as_dict()}
        if name == "R-NP":
            row.update(iv)
            row["crps"] = crps
        out["daily"].append(row)
    return out


def run_block(table: MarketTable, block: list[int], cfg: RunConfig,
              model_dir: Optional[str] = None) -> dict:
    torch.set_num_threads(1)
    d0 = block[0]
    models = fit_regime_models(table.as_of(d0), d0, cfg)
    saved = []
    if model_dir:
        base = Path(model_dir) / str(table.days[d0])
        meta = {"date": str(table.days[d0]), "seed": cfg.seed}
        saved.append(save_segmentation(base / "segmentation.npz", models.posterior, meta))
        saved.append(save_classifier(base / "classifier.npz", models.classifier, meta))
        for r, m in models.cnps.items():
            saved.append(save_cnp(base / f"cnp_{r}.npz", m, {**meta, "regime": r}))
        pd.DataFrame({"regime": list(models.fmap), "model": list(models.fmap.values())}).to_csv(
            base / "regime_map.csv", index=False)
    res = {"forecast": [], "daily": [], "dispatch": [], "schedule": [],
           "timings": dict(models.timings), "regimes": [], "models": [str(p) for p in saved]}
    post = models.posterior
    for k in range(post.K):
        res["regimes"].append({"refit_date": str(table.days[d0]), "regime": k, "mu": post.mu[k],
                               "sigma2": post.sigma2[k], "days": int((models.labels == k).sum()),
                               "forecast_model": models.fmap[k]})
    for d in block:
        day = run_day(table, d, models, cfg)
        for key in ("forecast", "daily", "dispatch", "schedule"):
            res[key] += day[key]
        for k, v in day["timings"].items():
            res["timings"][k] = res["timings"].get(k, 0.0) + v
    return res


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (MetricError, ValueError) as exc:
        log.warning("statistic skipped: %s", exc)
        return None


def evaluate(forecast: pd.DataFrame, daily: pd.DataFrame, dispatch: pd.DataFrame):
    models = [m for m in MODELS if m in set(forecast["model"])]
    summary = []
    for m in models:
        f = forecast[forecast["model"] == m]
        row = {"model": m, **point_errors(f["actual"], f["mean"]).as_dict()}
        if m == "R-NP":
            row.update(interval_scores(f["actual"], f["lower"], f["upper"]))
            row["crps"] = daily.loc[daily["model"] == m, "crps"].mean()
        summary.append(row)
    summary = pd.DataFrame(summary)

    tests = []
    err = {m: (forecast[forecast["model"] == m]["actual"] - forecast[forecast["model"] == m]["mean"]
               ).to_numpy() for m in models}
    for i, a in enumerate(models):
        for b in models[i + 1:]:
            r = _safe(dm_test, err[a], err[b], 24, "absolute")
            tests.append({"test": "diebold_mariano", "a": a, "b": b,
                          "statistic": None if r is None else r.statistic,
                          "p_value": None if r is None else r.p_value})
    if len(models) > 1:
        wide = daily.pivot(index="date", columns="model", values="mae")[models]
        fn = _safe(friedman_nemenyi, wide.to_numpy(), True)
        if fn is not None:
            tests.append({"test": "friedman", "a": "all", "b": "all",
                          "statistic": fn["friedman"].statistic, "p_value": fn["friedman"].p_value})
            for i, a in enumerate(models):
                for j in range(i + 1, len(models)):
                    tests.append({"test": "nemenyi", "a": a, "b": models[j], "statistic": None,
                                  "p_value": fn["nemenyi"][i, j]})
    tests = pd.DataFrame(tests, columns=["test", "a", "b", "statistic", "p_value"])

    ops = dispatch.groupby(["model", "case"]).agg(realized=("realized", "mean"),
                                                   regret=("regret", "mean")).reset_index()
    return summary, tests, ops


def topsis_table(summary: pd.DataFrame, ops: pd.DataFrame):
    models = list(summary["model"])
    acc = summary.set_index("model").loc[models, ["mae", "rmse", "mape", "smape"]].to_numpy()
    op = ops.pivot(index="model", columns="case", values="realized").loc[models, list(CASES)]
    rg = ops.pivot(index="model", columns="case", values="regret").loc[models, list(CASES)]
    try:
        dm = standard_matrix(models, acc, op.to_numpy(), rg.to_numpy())
    except TopsisError as exc:
        log.warning("TOPSIS skipped: %s", exc)
        return None, None
    res = rank(dm)
    matrix = pd.DataFrame(dm.values, index=pd.Index(models, name="alternative"),
                          columns=dm.criteria)
    return matrix, res.as_frame()


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str
    data_fingerprint: str
    evaluated_days: list
    refit_days: list
    artifacts: dict
    timings: dict

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=str)

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


OUTPUTS = ("forecasts.csv", "daily_metrics.csv", "dispatch.csv", "schedules.csv",
           "regimes.csv", "metrics.csv", "tests.csv", "operations.csv")


def prepare_out(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def run_pipeline(cfg: RunConfig, out, jobs: int = 1, force: bool = False,
                 table: Optional[MarketTable] = None, save_models: bool = True) -> RunManifest:
    out = Path(out)
    prepare_out(out, force)
    table = table if table is not None else load_table(cfg)
    days = evaluation_days(table, cfg)
    blocks = retrain_blocks(days, cfg.evaluation.reseg_days)
    model_dir = str(out / "models") if save_models else None
    log.info("evaluating %d days in %d refit blocks", len(days), len(blocks))

    if jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(jobs, mp_context=get_context("spawn")) as ex:
            parts = list(ex.map(run_block, [table] * len(blocks), blocks, [cfg] * len(blocks),
                                [model_dir] * len(blocks)))
    else:
        parts = [run_block(table, b, cfg, model_dir) for b in blocks]

    frames = {k: pd.DataFrame([r for p in parts for r in p[k]])
              for k in ("forecast", "daily", "dispatch", "schedule", "regimes")}
    timings: dict = {}
    for p in parts:
        for k, v in p["timings"].items():
            timings[k] = timings.get(k, 0.0) + v

    t0 = time.perf_counter()
    summary, tests, ops = evaluate(frames["forecast"], frames["daily"], frames["dispatch"])
    timings["evaluate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    matrix, ranking = topsis_table(summary, ops)
    timings["rank"] = time.perf_counter() - t0

    written = {}
    tables = dict(zip(OUTPUTS, (frames["forecast"], frames["daily"], frames["dispatch"],
                                frames["schedule"], frames["regimes"], summary, tests, ops)))
    if matrix is not None:
        tables["topsis_matrix.csv"] = matrix.reset_index()
        tables["topsis.csv"] = ranking
    for name, df in tables.items():
        df.to_csv(out / name, index=False)
    dump_config(cfg, out / "config.yaml")
    for path in sorted(out.glob("*.csv")) + [out / "config.yaml"] + sorted(
            (out / "models").rglob("*") if save_models else []):
        if path.is_file():
            written[str(path.relative_to(out))] = sha256_file(path)

    manifest = RunManifest(cfg.to_dict(), cfg.seed, __version__, table.fingerprint(),
                           [str(table.days[d]) for d in days],
                           [str(table.days[b[0]]) for b in blocks], written, timings)
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def rerun_from_manifest(manifest_path, out, jobs: int = 1, force: bool = False,
                        table: Optional[MarketTable] = None) -> RunManifest:
    m = RunManifest.load(manifest_path)
    cfg = from_dict(m.config)
    table = table if table is not None else load_table(cfg)
    if table.fingerprint() != m.data_fingerprint:
        raise ValueError("data differs from the manifest fingerprint")
    return run_pipeline(cfg, out, jobs, force, table)


def report(run_dir) -> str:
    run = Path(run_dir)
    parts = []
    for name, title in (("metrics.csv", "Forecast accuracy"), ("tests.csv", "Statistical tests"),
                        ("operations.csv", "Dispatch (mean realized value and regret)"),
                        ("topsis.csv", "TOPSIS ranking")):
        p = run / name
        if p.exists():
            parts.append(f"{title}\n{pd.read_csv(p).to_string(index=False)}")
    return "\n\n".join(parts)
