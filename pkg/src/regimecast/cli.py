"""Command-line entry point: ``regimecast <stage> ...``."""

from __future__ import annotations

import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import pandas as pd
import yaml

from .artifacts import (load_classifier, load_cnp, load_segmentation, save_classifier, save_cnp,
                        save_segmentation)
from .assoc import classification_report, feature_dependence, fit_regime_classifier
from .config import ConfigError, RunConfig, load_config, smoke_config
from .dispatch import CASES, plan
from .ingest import build_features, build_training_set, load_market_csv, simulate_site_profiles
from .mixture import interval
from .pipeline import (PRICE_SCALE, PipelineError, RegimeModels, evaluate, fit_regime_models,
                       forecast_rnp, load_table, prepare_out, report, rerun_from_manifest,
                       run_pipeline, substream)
from .regime import compress_regimes, fit_segmentation
from .topsis import DecisionMatrix, rank, standard_matrix

log = logging.getLogger("regimecast")


class Ctx:
    def __init__(self, seed, jobs, out, force, config, smoke):
        cfg = load_config(config) if config else (smoke_config() if smoke else RunConfig())
        self.cfg = cfg.replace(seed=seed) if seed is not None else cfg
        self.jobs, self.out, self.force = jobs, Path(out), force

    def table(self, data):
        return load_market_csv(data) if data else load_table(self.cfg)

    def outdir(self):
        prepare_out(self.out, self.force)
        return self.out


def _day(table, date):
    return table.day_index(date) if date else table.n - 1


@click.group()
@click.option("--seed", type=int, default=None, help="Root seed (overrides the config).")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--force", is_flag=True, help="Overwrite a non-empty output directory.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML run configuration.")
@click.option("--smoke", is_flag=True, help="Use the small end-to-end settings.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def cli(ctx, seed, jobs, out, force, config, smoke, verbose):
    """Regime-aware price forecasting and battery dispatch."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = Ctx(seed, jobs, out, force, config, smoke)


data_opt = click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
                        help="Market CSV (synthetic market from the config when omitted).")
date_opt = click.option("--date", default=None, help="Target day YYYY-MM-DD (default: last).")


@cli.command()
@data_opt
@date_opt
@click.pass_obj
def segment(obj: Ctx, data, date):
    """Fit and compress the regime segmentation of the window before DATE."""
    table = obj.table(data)
    d = _day(table, date)
    cfg = obj.cfg
    _, Y = build_training_set(table.as_of(d), d, cfg.evaluation.window)
    obs = Y.mean(axis=1)
    seg = fit_segmentation(obs, replace(cfg.segment, seed=substream(cfg.seed, "segment", d)))
    post = compress_regimes(seg.posterior, cfg.compress.kl_threshold, cfg.compress.min_mass,
                            obs=obs)
    out = obj.outdir()
    save_segmentation(out / "segmentation.npz", post, {"date": str(table.days[d])})
    counts = np.bincount(post.z, minlength=post.K)
    pd.DataFrame({"regime": range(post.K), "mu": post.mu, "sigma2": post.sigma2,
                  "days": counts}).to_csv(out / "regimes.csv", index=False)
    click.echo(f"{post.K} regimes (from {seg.posterior.K}) written to {out}")


@cli.command()
@click.option("--segmentation", type=click.Path(exists=True, dir_okay=False), required=True)
@data_opt
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="CSV for per-class holdout scores.")
@click.pass_obj
def classify(obj: Ctx, segmentation, data, report_path):
    """Train the regime classifier on a saved segmentation."""
    post, head = load_segmentation(segmentation)
    table = obj.table(data)
    d = table.day_index(head["date"])
    X, _ = build_training_set(table.as_of(d), d, obj.cfg.evaluation.window)
    if X.shape[0] != post.z.size:
        raise click.ClickException("segmentation does not match the data window")
    clf = fit_regime_classifier(X, post.z, post.K, replace(
        obj.cfg.classifier, seed=substream(obj.cfg.seed, "classifier", d)))
    out = obj.outdir()
    save_classifier(out / "classifier.npz", clf, {"date": head["date"]})
    hold = np.asarray(clf.holdout, dtype=int)
    rep = classification_report(clf, X[hold], post.z[hold]) if hold.size else None
    dep = feature_dependence(X, post.z)
    pd.DataFrame({"mi": dep.mi, "f_stat": dep.f_stat, "f_pvalue": dep.f_pvalue}).to_csv(
        out / "dependence.csv", index_label="feature")
    if rep is not None:
        if report_path:
            rep.per_class.to_csv(report_path)
        click.echo(f"holdout accuracy {rep.accuracy:.3f}, weighted F1 {rep.weighted_f1:.3f}")


def _save_models(models: RegimeModels, base: Path, date: str):
    meta = {"date": date}
    save_segmentation(base / "segmentation.npz", models.posterior, meta)
    save_classifier(base / "classifier.npz", models.classifier, meta)
    for r, m in models.cnps.items():
        save_cnp(base / f"cnp_{r}.npz", m, {**meta, "regime": r})
    pd.DataFrame({"regime": list(models.fmap), "model": list(models.fmap.values())}).to_csv(
        base / "regime_map.csv", index=False)


@cli.command()
@data_opt
@date_opt
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Model directory (default: --out).")
@click.pass_obj
def train(obj: Ctx, data, date, out_dir):
    """Segment, classify and train per-regime CNPs for DATE."""
    table = obj.table(data)
    d = _day(table, date)
    models = fit_regime_models(table.as_of(d), d, obj.cfg)
    if out_dir:
        obj.out = Path(out_dir)
    _save_models(models, obj.outdir(), str(table.days[d]))
    click.echo(f"trained {len(models.cnps)} CNPs for {models.posterior.K} regimes")


def _load_models(path: Path, table, cfg) -> RegimeModels:
    post, head = load_segmentation(path / "segmentation.npz")
    clf, _ = load_classifier(path / "classifier.npz")
    fmap_df = pd.read_csv(path / "regime_map.csv")
    fmap = dict(zip(fmap_df["regime"].astype(int), fmap_df["model"].astype(int)))
    cnps = {r: load_cnp(path / f"cnp_{r}.npz")[0] for r in sorted(set(fmap.values()))}
    d = table.day_index(head["date"])
    X, Y = build_training_set(table.as_of(d), d, cfg.evaluation.window)
    return RegimeModels(d, post, np.asarray(post.z), X, Y, clf, cnps, fmap)


@cli.command()
@click.option("--models", "models_dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@data_opt
@date_opt
@click.pass_obj
def predict(obj: Ctx, models_dir, data, date):
    """Mixture forecast for DATE from saved models."""
    table = obj.table(data)
    models = _load_models(Path(models_dir), table, obj.cfg)
    d = _day(table, date)
    if d < models.day:
        raise click.ClickException("target date precedes the model fit date")
    mix = forecast_rnp(models, table.as_of(d), d, obj.cfg)
    lo, hi = interval(mix, obj.cfg.evaluation.coverage)
    df = pd.DataFrame({"date": str(table.days[d]), "hour": range(24), "model": "R-NP",
                       "mean": mix.agg_mean, "variance": mix.agg_var, "lower": lo, "upper": hi,
                       "actual": table.price[d]})
    out = obj.outdir()
    df.to_csv(out / "forecast.csv", index=False)
    click.echo(f"forecast for {table.days[d]} written to {out / 'forecast.csv'}")


@cli.command()
@click.option("--case", "case", type=click.Choice(CASES + ("1", "2", "3", "4")), required=True)
@click.option("--forecasts", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--battery", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML with battery (and optional strategy/site) sections.")
@click.pass_obj
def dispatch(obj: Ctx, case, forecasts, battery):
    """Plan battery schedules from a forecast CSV (one per date and model)."""
    case = {"1": "I", "2": "II", "3": "III", "4": "IV"}.get(case, case)
    cfg = obj.cfg
    if battery:
        cfg = cfg.replace(**load_yaml(battery))
    fc = pd.read_csv(forecasts)
    if "model" not in fc:
        fc["model"] = "forecast"
    rows, summary = [], []
    for (date, model), g in fc.groupby(["date", "model"], sort=False):
        g = g.sort_values("hour")
        p_hat = g["mean"].to_numpy() * PRICE_SCALE
        sigma = (np.sqrt(g["variance"].to_numpy()) * PRICE_SCALE if "variance" in g
                 and g["variance"].notna().all() else np.zeros(len(g)))
        site = simulate_site_profiles(date, cfg.site)
        s = plan(case, p_hat, sigma, cfg.battery, cfg.strategy, r_hat=site.residual,
                 g_hat=site.solar, demand=site.demand)
        viol = s.check(cfg.battery, site.demand if case == "IV" else None)
        summary.append({"date": date, "model": model, "case": case, "status": s.status,
                        "objective": s.objective, "max_violation": viol})
        for h in range(len(g)):
            rows.append({"date": date, "model": model, "case": case, "hour": h,
                         "charge": s.charge[h], "discharge": s.discharge[h], "soc": s.soc[h + 1]})
    out = obj.outdir()
    pd.DataFrame(rows).to_csv(out / "schedules.csv", index=False)
    pd.DataFrame(summary).to_csv(out / "dispatch.csv", index=False)
    click.echo(f"{len(summary)} schedules written to {out}")


def load_yaml(path) -> dict:
    return yaml.safe_load(Path(path).read_text()) or {}


@cli.command("evaluate")
@click.option("--run", "run_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.pass_obj
def evaluate_cmd(obj: Ctx, run_dir):
    """Recompute summary metrics and tests from a run directory."""
    run = Path(run_dir)
    fc = pd.read_csv(run / "forecasts.csv")
    daily = pd.read_csv(run / "daily_metrics.csv")
    disp = pd.read_csv(run / "dispatch.csv")
    summary, tests, ops = evaluate(fc, daily, disp)
    out = obj.outdir()
    summary.to_csv(out / "metrics.csv", index=False)
    tests.to_csv(out / "tests.csv", index=False)
    ops.to_csv(out / "operations.csv", index=False)
    click.echo(summary.to_string(index=False))


@cli.command("topsis")
@click.option("--matrix", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Long CSV (alternative, criterion, value, direction[, weight]) or the "
                   "12-column matrix written by `run`.")
@click.option("--regret-iv-maximize", is_flag=True,
              help="Treat the Case IV regret column as a benefit.")
@click.pass_obj
def topsis_cmd(obj: Ctx, matrix, regret_iv_maximize):
    """Rank alternatives by closeness to the ideal solution."""
    df = pd.read_csv(matrix)
    if {"criterion", "direction"} <= set(df.columns):
        dm = DecisionMatrix.from_long(df)
    else:
        vals = df.drop(columns="alternative").to_numpy(dtype=float)
        dm = standard_matrix(df["alternative"], vals[:, :4], vals[:, 4:8], vals[:, 8:],
                             regret_iv_minimize=not regret_iv_maximize)
    res = rank(dm).as_frame().sort_values("rank")
    out = obj.outdir()
    res.to_csv(out / "topsis.csv", index=False)
    click.echo(res.to_string(index=False))


@cli.command()
@click.option("--stride", type=int, default=None)
@click.option("--reseg-days", type=int, default=None)
@click.option("--days", type=int, default=None)
@click.option("--start", default=None, help="First evaluated day YYYY-MM-DD.")
@data_opt
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Re-run with the configuration stored in a manifest.")
@click.pass_obj
def run(obj: Ctx, stride, reseg_days, days, start, data, manifest):
    """Rolling evaluation end to end."""
    if manifest:
        table = load_market_csv(data) if data else None
        m = rerun_from_manifest(manifest, obj.out, obj.jobs, obj.force, table)
    else:
        ev = {k: v for k, v in (("stride", stride), ("reseg_days", reseg_days), ("days", days),
                                ("start", start)) if v is not None}
        cfg = obj.cfg.replace(evaluation=ev, **({"data": {"path": data}} if data else {}))
        m = run_pipeline(cfg, obj.out, obj.jobs, obj.force)
    click.echo(f"{len(m.evaluated_days)} days evaluated, outputs in {obj.out}")
    click.echo(report(obj.out))


@cli.command("report")
@click.option("--run", "run_dir", type=click.Path(exists=True, file_okay=False), required=True)
def report_cmd(run_dir):
    """Print the summary tables of a finished run."""
    click.echo(report(run_dir))


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(1)
    except (PipelineError, ConfigError, FileExistsError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
