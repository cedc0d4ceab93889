"""Relative error metrics.

Both metrics are *sums* over the evaluated days of the per-day error taken
as a fraction of the true value, so they grow with the horizon.  Pass
``per_day=True`` to divide by the number of days instead.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data import FEATURES, CountrySeries
from .errors import DateMisalignmentError, LengthMismatchError, ZeroOriginalError


def relative_errors(original, predicted) -> np.ndarray:
    original = np.asarray(original, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if original.shape != predicted.shape:
        raise LengthMismatchError(f"shape mismatch: {original.shape} vs {predicted.shape}")
    if np.any(original == 0):
        raise ZeroOriginalError("relative error undefined where the original value is 0")
    return (original - predicted) / original


def rmse_relative(original, predicted, per_day: bool = False) -> float:
    e = relative_errors(original, predicted)
    total = float(np.sum(e * e))
    return total / len(e) if per_day else total


def rmae_relative(original, predicted, per_day: bool = False) -> float:
    e = relative_errors(original, predicted)
    total = float(np.sum(np.abs(e)))
    return total / len(e) if per_day else total


@dataclass(frozen=True)
class EvaluationReport:
    start_date: dt.date
    horizon: int
    rmse: np.ndarray  # (3,)
    rmae: np.ndarray  # (3,)
    relative_errors: np.ndarray  # (d, 3)
    per_day: bool = False

    def to_dict(self) -> dict:
        return {
            "start_date": self.start_date.isoformat(),
            "horizon": self.horizon,
            "normalization": "mean over days" if self.per_day else "sum over days",
            "rmse": dict(zip(FEATURES, map(float, self.rmse))),
            "rmae": dict(zip(FEATURES, map(float, self.rmae))),
            "relative_errors": [list(map(float, row)) for row in self.relative_errors],
        }


def evaluate_values(truth, predicted, start_date, per_day: bool = False) -> EvaluationReport:
    truth = np.asarray(truth, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    e = relative_errors(truth, predicted)
    d = len(e)
    rmse = np.sum(e * e, axis=0)
    rmae = np.sum(np.abs(e), axis=0)
    if per_day:
        rmse, rmae = rmse / d, rmae / d
    return EvaluationReport(start_date, d, rmse, rmae, e, per_day)


def evaluate_forecast(truth: CountrySeries, forecast, per_day: bool = False) -> EvaluationReport:
    """Score ``forecast`` (a ForecastResult) against the matching truth days."""
    first = forecast.start_date
    last = forecast.dates[-1]
    if first < truth.start_date or last > truth.end_date:
        raise DateMisalignmentError(
            f"forecast {first}..{last} not covered by truth {truth.start_date}..{truth.end_date}"
        )
    i = truth.index_of(first)
    actual = truth.values[i : i + forecast.horizon]
    return evaluate_values(actual, forecast.values, first, per_day)
