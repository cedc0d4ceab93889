"""Experiment configuration (YAML on disk)."""

from __future__ import annotations

import datetime as dt
import os
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from .data import CountrySeries, as_date, load_series
from .errors import ConfigError
from .forecast import ShortLookbackWarning
from .gru import TrainConfig

SEED_ENV = "EPICAST_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw in (None, ""):
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class CountryEntry:
    name: str
    csv_path: str
    population_density: float

    def __post_init__(self):
        if not self.population_density > 0:
            raise ConfigError(f"{self.name}: population_density must be > 0")


@dataclass(frozen=True)
class DateRanges:
    pretrain_from: dt.date = dt.date(2020, 2, 15)
    pretrain_to: dt.date = dt.date(2021, 4, 16)
    finetune_from: dt.date = dt.date(2021, 1, 1)
    finetune_to: dt.date = dt.date(2021, 3, 31)
    validate_from: dt.date = dt.date(2021, 4, 1)
    validate_to: dt.date = dt.date(2021, 4, 15)
    test_from: dt.date = dt.date(2021, 4, 16)
    test_to: dt.date = dt.date(2021, 6, 4)
    # target-only model; defaults to pretrain_from .. finetune_to
    target_only_from: dt.date | None = None
    target_only_to: dt.date | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                object.__setattr__(self, f.name, as_date(v))
        for a, b in (("pretrain_from", "pretrain_to"), ("finetune_from", "finetune_to"),
                     ("validate_from", "validate_to"), ("test_from", "test_to")):
            if getattr(self, a) > getattr(self, b):
                raise ConfigError(f"{a} is after {b}")

    @property
    def pretrain(self):
        return self.pretrain_from, self.pretrain_to

    @property
    def finetune(self):
        return self.finetune_from, self.finetune_to

    @property
    def target_only(self):
        return (self.target_only_from or self.pretrain_from, self.target_only_to or self.finetune_to)


@dataclass(frozen=True)
class ExperimentConfig:
    countries: tuple
    target: str
    dates: DateRanges = field(default_factory=DateRanges)
    lookback: int = 14
    horizon: int = 7
    train: TrainConfig = field(default_factory=TrainConfig)
    ensemble_mode: str = "literal"
    pooled_rmse: bool = False
    seeds: tuple = tuple(range(20))
    finetune_enabled: bool = True
    base_dir: Path = Path(".")

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        names = [c.name for c in self.countries]
        if len(set(names)) != len(names):
            raise ConfigError("country names must be unique")
        if self.target not in names:
            raise ConfigError(f"target {self.target!r} is not among the configured countries")
        if not self.sources:
            raise ConfigError("at least one source country besides the target is required")
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError("lookback and horizon must be >= 1")
        if self.ensemble_mode not in ("literal", "inverse"):
            raise ConfigError(f"ensemble_mode must be 'literal' or 'inverse', got {self.ensemble_mode!r}")
        if self.horizon > self.lookback:
            warnings.warn(
                f"horizon {self.horizon} exceeds lookback {self.lookback}",
                ShortLookbackWarning, stacklevel=3,
            )

    @property
    def sources(self) -> list[str]:
        return [c.name for c in self.countries if c.name != self.target]

    def country(self, name: str) -> CountryEntry:
        for c in self.countries:
            if c.name == name:
                return c
        raise KeyError(name)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, train=self.train.replace(seed=int(seed)))

    def load_all(self) -> dict[str, CountrySeries]:
        out = {}
        for c in self.countries:
            path = Path(c.csv_path)
            if not path.is_absolute():
                path = self.base_dir / path
            out[c.name] = load_series(path, c.name, c.population_density)
        return out

    def to_dict(self) -> dict:
        d = {
            "target": self.target,
            "countries": [asdict(c) for c in self.countries],
            "dates": {k: (v.isoformat() if v else None) for k, v in asdict(self.dates).items()},
            "lookback": self.lookback,
            "horizon": self.horizon,
            "train": asdict(self.train),
            "ensemble_mode": self.ensemble_mode,
            "pooled_rmse": self.pooled_rmse,
            "seeds": list(self.seeds),
            "finetune_enabled": self.finetune_enabled,
        }
        return d


def config_from_dict(raw: dict, base_dir=".") -> ExperimentConfig:
    raw = dict(raw or {})
    try:
        countries = [CountryEntry(str(c["name"]), str(c["csv_path"]), float(c["population_density"]))
                     for c in raw.pop("countries")]
        target = raw.pop("target")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config needs 'countries' (name, csv_path, population_density) and 'target': {exc}") from None
    dates = DateRanges(**(raw.pop("dates", None) or {}))
    train_raw = dict(raw.pop("train", None) or {})
    train_raw.setdefault("seed", default_seed())
    try:
        # YAML 1.1 reads "1e-8" as a string
        for key in ("learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
                    "finetune_lr_multiplier", "clip_norm"):
            if train_raw.get(key) is not None:
                train_raw[key] = float(train_raw[key])
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None
    try:
        train_cfg = TrainConfig(**train_raw)
        cfg = ExperimentConfig(countries=countries, target=target, dates=dates, train=train_cfg,
                               base_dir=Path(base_dir), **raw)
    except TypeError as exc:
        raise ConfigError(f"unknown config key: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(raw, base_dir=path.parent)


def save_config(config: ExperimentConfig, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def default_config_text() -> str:
    return resources.files("epicast").joinpath("resources/default_config.yaml").read_text(encoding="utf-8")
