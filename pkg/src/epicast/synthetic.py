"""Deterministic epidemic-like series for desk-scale experiments.

New cases are one or two logistic-derivative pulses over a small floor,
deaths a lagged fraction of cases, and active cases the cases of the last
``recovery_window`` days minus the deaths over the same window.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace

import numpy as np

from .data import CountrySeries, as_date

KINDS = ("logistic-wave", "two-wave", "noisy")


@dataclass(frozen=True)
class SynthParams:
    name: str = "Synthetic"
    start_date: dt.date = dt.date(2020, 2, 15)
    population_density: float = 100.0
    amplitude: float = 1000.0
    center: float | None = None  # day index of the peak; default: mid-series
    width: float | None = None  # logistic scale in days; default: days / 25
    second_amplitude: float | None = None  # default: 1.5 * amplitude
    second_center: float | None = None  # default: 80% of the series
    second_width: float | None = None
    floor: float = 1.0
    death_fraction: float = 0.02
    death_lag: int = 14
    recovery_window: int = 14
    noise: float | None = None  # lognormal sigma; default 0.1 for "noisy", else 0


def logistic_pulse(t, amplitude, center, width):
    """Derivative of a logistic curve, scaled to peak at ``amplitude``."""
    s = 1.0 / (1.0 + np.exp(-(t - center) / width))
    return 4.0 * amplitude * s * (1.0 - s)


def generate_synthetic(kind: str, days: int, seed: int = 0, params: SynthParams | None = None,
                       **overrides) -> CountrySeries:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if days < 2:
        raise ValueError("days must be >= 2")
    p = replace(params or SynthParams(), **overrides)
    t = np.arange(days, dtype=np.float64)
    center = days * 0.5 if p.center is None else p.center
    width = days / 25.0 if p.width is None else p.width

    if kind == "two-wave":
        center = days * 0.3 if p.center is None else p.center
        cases = logistic_pulse(t, p.amplitude, center, width)
        cases = cases + logistic_pulse(
            t,
            1.5 * p.amplitude if p.second_amplitude is None else p.second_amplitude,
            days * 0.8 if p.second_center is None else p.second_center,
            width if p.second_width is None else p.second_width,
        )
    else:
        cases = logistic_pulse(t, p.amplitude, center, width)
    cases = cases + p.floor

    noise = (0.1 if kind == "noisy" else 0.0) if p.noise is None else p.noise
    if noise > 0:
        rng = np.random.default_rng(seed)
        cases = cases * rng.lognormal(0.0, noise, size=days)

    deaths = np.full(days, p.death_fraction * p.floor)
    lag = p.death_lag
    if lag < days:
        deaths[lag:] = p.death_fraction * cases[: days - lag]

    window = np.ones(p.recovery_window)
    active = np.convolve(cases - deaths, window)[:days]
    active = np.maximum(active, 0.0)

    return CountrySeries(p.name, p.population_density, as_date(p.start_date),
                         np.column_stack([cases, deaths, active]))
