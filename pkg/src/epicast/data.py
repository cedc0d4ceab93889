"""Country series ingestion, density normalization, scaling and windowing."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    ConstantFeatureError,
    EmptyFileError,
    MalformedRowError,
    MissingDateError,
    NegativeValueError,
    OutOfRangeError,
    SeriesTooShortError,
    ZeroDensityError,
)

FEATURES = ("new_cases", "new_deaths", "active_cases")
CSV_HEADER = ("date",) + FEATURES
ONE_DAY = dt.timedelta(days=1)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value))


class DayRecord(NamedTuple):
    date: dt.date
    new_cases: float
    new_deaths: float
    active_cases: float


@dataclass(frozen=True)
class CountrySeries:
    """Daily (new_cases, new_deaths, active_cases) series for one country.

    ``values`` is an ``(n, 3)`` read-only float array; row ``k`` is the
    calendar day ``start_date + k``, so contiguity holds by construction.
    """

    country_name: str
    population_density: float
    start_date: dt.date
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[1] != len(FEATURES):
            raise ValueError(f"values must have shape (n, 3), got {values.shape}")
        if len(values) < 1:
            raise SeriesTooShortError("series is empty")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        if np.any(values < 0):
            raise NegativeValueError(f"{self.country_name}: negative value in series")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_date", as_date(self.start_date))
        object.__setattr__(self, "population_density", float(self.population_density))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + (len(self) - 1) * ONE_DAY

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + k * ONE_DAY for k in range(len(self))]

    def records(self) -> Iterator[DayRecord]:
        for d, row in zip(self.dates, self.values):
            yield DayRecord(d, *map(float, row))

    def index_of(self, day) -> int:
        day = as_date(day)
        k = (day - self.start_date).days
        if not 0 <= k < len(self):
            raise OutOfRangeError(
                f"{day} outside {self.country_name} range {self.start_date}..{self.end_date}"
            )
        return k

    def with_values(self, values) -> "CountrySeries":
        return CountrySeries(self.country_name, self.population_density, self.start_date, values)


def load_series(path, country_name: str, population_density: float) -> CountrySeries:
    """Read a ``date,new_cases,new_deaths,active_cases`` CSV file.

    Rows may appear in any order; they are sorted by date and must then form
    an unbroken daily sequence.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyFileError(f"{path}: file is empty")
    header = tuple(cell.strip() for cell in rows[0])
    if header != CSV_HEADER:
        raise MalformedRowError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
    if len(rows) == 1:
        raise EmptyFileError(f"{path}: no data rows")
    if len(rows) == 2:
        raise SeriesTooShortError(f"{path}: a series needs at least 2 days")

    parsed = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise MalformedRowError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
        try:
            day = dt.date.fromisoformat(row[0].strip())
            nums = [float(cell) for cell in row[1:]]
        except ValueError as exc:
            raise MalformedRowError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in nums):
            raise MalformedRowError(f"{path}:{lineno}: non-finite value")
        for name, v in zip(FEATURES, nums):
            if v < 0:
                raise NegativeValueError(f"{path}:{lineno}: {name} = {v} is negative")
        parsed.append((day, nums))

    parsed.sort(key=lambda item: item[0])
    for (prev, _), (cur, _) in zip(parsed, parsed[1:]):
        if cur - prev != ONE_DAY:
            if cur == prev:
                raise MalformedRowError(f"{path}: duplicate date {cur}")
            raise MissingDateError(f"{path}: gap between {prev} and {cur}")

    return CountrySeries(
        country_name=country_name,
        population_density=population_density,
        start_date=parsed[0][0],
        values=[nums for _, nums in parsed],
    )


def write_series(series: CountrySeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in series.records():
            w.writerow([rec.date.isoformat()] + [repr(v) for v in rec[1:]])


def normalize_by_density(series: CountrySeries) -> CountrySeries:
    if not series.population_density > 0:
        raise ZeroDensityError(f"{series.country_name}: population density must be > 0")
    return series.with_values(series.values / series.population_density)


def denormalize_by_density(values, population_density: float) -> np.ndarray:
    if not population_density > 0:
        raise ZeroDensityError("population density must be > 0")
    return np.asarray(values, dtype=np.float64) * population_density


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min-max scaling onto [0, 1]."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.minimum), _frozen(self.maximum)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("minimum and maximum must be 1-d arrays of equal length")
        bad = [f for f in range(len(lo)) if not hi[f] > lo[f]]
        if bad:
            names = [FEATURES[f] if f < len(FEATURES) else str(f) for f in bad]
            raise ConstantFeatureError(f"feature(s) {', '.join(names)} have max <= min")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def apply(self, values) -> np.ndarray:
        return (_values_of(values) - self.minimum) / self.span

    def invert(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.span + self.minimum


def _values_of(obj) -> np.ndarray:
    if isinstance(obj, CountrySeries):
        return obj.values
    return np.asarray(obj, dtype=np.float64)


def fit_scaler(series) -> FeatureScaler:
    values = _values_of(series)
    if len(values) < 2:
        raise SeriesTooShortError("need at least 2 days to fit a scaler")
    return FeatureScaler(values.min(axis=0), values.max(axis=0))


def apply_scaler(values, scaler: FeatureScaler) -> np.ndarray:
    return scaler.apply(values)


def invert_scaler(values, scaler: FeatureScaler) -> np.ndarray:
    return scaler.invert(values)


def split_by_dates(series: CountrySeries, start, end) -> CountrySeries:
    """Inclusive sub-series ``[start, end]``."""
    start, end = as_date(start), as_date(end)
    if start > end:
        raise OutOfRangeError(f"empty range {start}..{end}")
    i, j = series.index_of(start), series.index_of(end)
    return CountrySeries(series.country_name, series.population_density, start, series.values[i : j + 1])


@dataclass(frozen=True)
class WindowedDataset:
    lookback: int
    inputs: np.ndarray  # (n, L, 3)
    targets: np.ndarray  # (n, 3)
    target_dates: tuple

    def __len__(self) -> int:
        return len(self.targets)


def make_windows(series, lookback: int, scaler: FeatureScaler | None = None,
                 start_date=None) -> WindowedDataset:
    """Sliding (L days -> next day) pairs over ``series``.

    With ``scaler`` the windows are built from scaled values.  Plain arrays
    are accepted too; target dates are then only known if ``start_date`` is
    given.
    """
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    values = _values_of(series)
    if scaler is not None:
        values = scaler.apply(values)
    n = len(values) - lookback
    if n < 1:
        raise SeriesTooShortError(
            f"series of length {len(values)} is too short for lookback {lookback}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(values, (lookback, values.shape[1]))
    inputs = _frozen(windows[:n, 0])
    targets = _frozen(values[lookback:])
    if isinstance(series, CountrySeries):
        start_date = series.start_date
    dates = ()
    if start_date is not None:
        first = as_date(start_date) + lookback * ONE_DAY
        dates = tuple(first + k * ONE_DAY for k in range(n))
    return WindowedDataset(lookback, inputs, targets, dates)
