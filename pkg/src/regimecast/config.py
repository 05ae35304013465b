"""Run configuration: one YAML section per module, defaults from the dataclasses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .assoc import ClassifierConfig
from .bench import DnnConfig
from .cnp import CnpConfig
from .dispatch import BatteryParams, StrategyParams
from .ingest import SiteConfig
from .regime import SegmentConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    path: Optional[str] = None  # market CSV; synthetic market when None
    synthetic_days: int = 1550
    synthetic_seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    start: Optional[str] = None  # first target date; default: last `days` of the data
    days: int = 90
    stride: int = 1
    window: int = 1460
    reseg_days: int = 7
    coverage: float = 0.8


@dataclass(frozen=True)
class CompressConfig:
    kl_threshold: float = 0.05
    min_mass: float = 0.02


@dataclass(frozen=True)
class ForecastConfig:
    search_trials: int = 0  # 0 trains the default CNP config directly
    max_context: int = 512
    min_pairs: int = 8


@dataclass(frozen=True)
class BaselineConfig:
    lear: bool = True
    lear_val_days: int = 91
    dnn: bool = True
    dnn_trials: int = 4


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = DataConfig()
    evaluation: EvalConfig = EvalConfig()
    segment: SegmentConfig = SegmentConfig()
    compress: CompressConfig = CompressConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    cnp: CnpConfig = CnpConfig()
    forecast: ForecastConfig = ForecastConfig()
    baselines: BaselineConfig = BaselineConfig()
    dnn: DnnConfig = DnnConfig()
    battery: BatteryParams = BatteryParams()
    strategy: StrategyParams = StrategyParams()
    site: SiteConfig = SiteConfig()

    def to_dict(self) -> dict:
        d = _plain(dataclasses.asdict(self))
        bat = d["battery"]
        for k in ("s_init", "s_final"):  # derived from c_max unless set otherwise
            if bat[k] == 0.5 * bat["c_max"]:
                bat[k] = None
        return d

    def replace(self, **sections) -> "RunConfig":
        """Override fields section-wise, e.g. ``replace(evaluation={"stride": 7})``."""
        return from_dict(_merge(self.to_dict(), sections))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, values):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError(f"section for {cls.__name__} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    defaults = cls()
    kw = {k: tuple(v) if isinstance(getattr(defaults, k), tuple) and isinstance(v, list) else v
          for k, v in values.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def from_dict(d: dict) -> RunConfig:
    d = dict(d or {})
    sections = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = set(d) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kw = {"seed": int(d.pop("seed", 0))}
    for name, value in d.items():
        kw[name] = _build(type(sections[name].default), value)
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return from_dict(yaml.safe_load(text) or {})


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


SMOKE = {
    "data": {"synthetic_days": 462},
    "evaluation": {"days": 90, "stride": 7, "window": 365},
    "segment": {"sweeps": 400, "burn_in": 150},
    "classifier": {"epochs": 40},
    "cnp": {"d": 32, "hidden": 64, "epochs": 60, "steps_per_epoch": 8},
    "dnn": {"hidden": [64, 64, 64, 64], "epochs": 30},
    "baselines": {"dnn_trials": 2, "lear_val_days": 60},
}


def smoke_config(seed: int = 0) -> RunConfig:
    """Desk-scale settings for an end-to-end check on a synthetic market."""
    return from_dict({**SMOKE, "seed": seed})
