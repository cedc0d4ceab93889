"""Recursive multi-day forecasting.

Each one-step prediction is appended to the input window (and the oldest
day dropped) to produce the next one, so a model trained for next-day
prediction yields an H-day forecast.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FEATURES, ONE_DAY, CountrySeries, as_date, denormalize_by_density, normalize_by_density
from .errors import ContextLengthMismatchError, DateMisalignmentError, MalformedRowError, NonFinitePredictionError

FORECAST_HEADER = ("date",) + FEATURES + ("member_id",)


class ShortLookbackWarning(UserWarning):
    """Horizon exceeds the look-back, so late steps see only predicted days."""


@dataclass(frozen=True)
class ForecastResult:
    start_date: dt.date
    values: np.ndarray  # (H, 3) counts
    member_id: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(FEATURES) or len(values) < 1:
            raise ValueError(f"forecast values must be (H, 3) with H >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("forecast values must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_date", as_date(self.start_date))

    @property
    def horizon(self) -> int:
        return len(self.values)

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + k * ONE_DAY for k in range(self.horizon)]


def recursive_forecast(model, context: CountrySeries, horizon: int = 7, member_id: str | None = None,
                       trace: list | None = None) -> ForecastResult:
    """Forecast ``horizon`` days following the last day of ``context``.

    ``context`` must hold exactly ``model.lookback`` days of raw counts.  The
    model only needs ``lookback``, ``scaler`` and ``predict_scaled(window)``.
    If ``trace`` is a list, every window fed to the model is appended to it.
    """
    L = model.lookback
    if len(context) != L:
        raise ContextLengthMismatchError(f"context has {len(context)} days, model lookback is {L}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > L:
        warnings.warn(
            f"horizon {horizon} > lookback {L}: the last {horizon - L} step(s) condition on predictions only",
            ShortLookbackWarning,
            stacklevel=2,
        )

    window = model.scaler.apply(normalize_by_density(context).values)
    preds = np.empty((horizon, window.shape[1]))
    for step in range(horizon):
        if trace is not None:
            trace.append(window.copy())
        nxt = np.asarray(model.predict_scaled(window), dtype=np.float64)
        if not np.all(np.isfinite(nxt)):
            raise NonFinitePredictionError(f"non-finite prediction at step {step + 1}")
        preds[step] = nxt
        # feed back the raw scaled prediction; clamping happens only on output
        window = np.vstack([window[1:], nxt[None]])

    counts = denormalize_by_density(model.scaler.invert(preds), context.population_density)
    if not np.all(np.isfinite(counts)):
        raise NonFinitePredictionError("prediction overflowed when unscaling")
    if member_id is None:
        member_id = getattr(model, "provenance", "") or "model"
    return ForecastResult(context.end_date + ONE_DAY, np.maximum(counts, 0.0), member_id)


def forecast_from(model, series: CountrySeries, origin, horizon: int = 7,
                  member_id: str | None = None) -> ForecastResult:
    """Forecast starting on ``origin`` using the ``lookback`` days before it."""
    origin = as_date(origin)
    end = series.index_of(origin - ONE_DAY)
    start = end - model.lookback + 1
    if start < 0:
        raise ContextLengthMismatchError(
            f"{series.country_name} has only {end + 1} days before {origin}, need {model.lookback}"
        )
    context = CountrySeries(series.country_name, series.population_density,
                            series.start_date + start * ONE_DAY, series.values[start : end + 1])
    return recursive_forecast(model, context, horizon, member_id)


def persistence_baseline(context: CountrySeries, horizon: int = 7,
                         member_id: str = "persistence") -> ForecastResult:
    if len(context) < 1:
        raise ValueError("context must be non-empty")
    rows = np.repeat(context.values[-1:], horizon, axis=0)
    return ForecastResult(context.end_date + ONE_DAY, rows, member_id)


def write_forecasts(forecasts, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for fc in forecasts:
            for day, row in zip(fc.dates, fc.values):
                w.writerow([day.isoformat()] + [repr(float(v)) for v in row] + [fc.member_id])


def read_forecasts(path) -> list[ForecastResult]:
    """Inverse of :func:`write_forecasts`; rows are grouped by member_id."""
    groups: dict[str, list] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != FORECAST_HEADER:
            raise MalformedRowError(f"{path}: expected header {','.join(FORECAST_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(FORECAST_HEADER):
                raise MalformedRowError(f"{path}: bad row {row!r}")
            groups.setdefault(row[-1], []).append(
                (dt.date.fromisoformat(row[0]), [float(v) for v in row[1:4]])
            )
    out = []
    for member, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        for (a, _), (b, _) in zip(rows, rows[1:]):
            if b - a != ONE_DAY:
                raise DateMisalignmentError(f"{path}: member {member} has non-contiguous dates")
        out.append(ForecastResult(rows[0][0], [v for _, v in rows], member))
    return out
