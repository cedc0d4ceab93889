"""Pre-training on a source country and fine-tuning on the target country."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

from .data import CountrySeries, as_date, fit_scaler, make_windows, normalize_by_density, split_by_dates
from .errors import SeriesTooShortError
from .gru import GruModel, TrainConfig, train


def _interval(date_range) -> tuple[dt.date, dt.date]:
    start, end = date_range
    return as_date(start), as_date(end)


@dataclass(frozen=True)
class TransferPlan:
    source: str
    pretrain_range: tuple
    target: str
    finetune_range: tuple
    finetune_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "pretrain_range", _interval(self.pretrain_range))
        object.__setattr__(self, "finetune_range", _interval(self.finetune_range))

    def check(self, lookback: int) -> None:
        for name, (a, b) in (("pretrain", self.pretrain_range), ("finetune", self.finetune_range)):
            if (b - a).days + 1 <= lookback:
                raise ValueError(f"{name} range {a}..{b} must span more than {lookback} days")


def _fit_on_slice(series: CountrySeries, date_range, lookback: int):
    start, end = _interval(date_range)
    piece = split_by_dates(normalize_by_density(series), start, end)
    if len(piece) <= lookback:
        raise SeriesTooShortError(f"{start}..{end} holds {len(piece)} days, lookback {lookback} needs more")
    scaler = fit_scaler(piece)
    return make_windows(piece, lookback, scaler), scaler


def pretrain(source_series: CountrySeries, date_range, lookback: int, config: TrainConfig,
             provenance: str | None = None, return_history: bool = False):
    """Fresh model trained on one country's density-normalized, min-max scaled slice."""
    dataset, scaler = _fit_on_slice(source_series, date_range, lookback)
    model, history = train(dataset, config, scaler=scaler,
                           provenance=provenance or source_series.country_name)
    return (model, history) if return_history else model


def finetune(model: GruModel, target_series: CountrySeries, date_range, config: TrainConfig,
             return_history: bool = False):
    """Continue training every parameter on the target slice at a reduced rate.

    The scaler is refit on the target slice and replaces the source scaler.
    """
    dataset, scaler = _fit_on_slice(target_series, date_range, model.lookback)
    ft = config.for_finetune()
    tuned, history = train(
        dataset, ft, initial=model.params, scaler=scaler,
        provenance=f"{model.provenance}→fine-tuned:{target_series.country_name}",
    )
    return (tuned, history) if return_history else tuned


def train_target_only(target_series: CountrySeries, date_range, lookback: int, config: TrainConfig,
                      return_history: bool = False):
    return pretrain(target_series, date_range, lookback, config,
                    provenance=f"{target_series.country_name}-only", return_history=return_history)


def run_plan(plan: TransferPlan, source_series: CountrySeries, target_series: CountrySeries,
             lookback: int, config: TrainConfig) -> tuple[GruModel, GruModel]:
    """Returns ``(pretrained, final)``; ``final is pretrained`` when fine-tuning is off."""
    plan.check(lookback)
    base = pretrain(source_series, plan.pretrain_range, lookback, config)
    if not plan.finetune_enabled:
        return base, base
    return base, finetune(base, target_series, plan.finetune_range, config)

