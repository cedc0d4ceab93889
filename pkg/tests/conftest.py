import datetime as dt

import numpy as np
import pytest

from epicast.config import CountryEntry, DateRanges, ExperimentConfig
from epicast.data import CountrySeries
from epicast.gru import TrainConfig
from epicast.synthetic import generate_synthetic


def make_series(values, name="X", density=1.0, start=dt.date(2020, 2, 15)):
    return CountrySeries(name, density, start, np.asarray(values, dtype=np.float64))


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# Short calendar so the whole pipeline runs in about a second.
SMALL_DATES = DateRanges(
    pretrain_from="2020-01-01", pretrain_to="2020-04-30",
    finetune_from="2020-03-01", finetune_to="2020-04-30",
    validate_from="2020-05-01", validate_to="2020-05-14",
    test_from="2020-05-15", test_to="2020-06-08",
)
SMALL_DAYS = 160  # 2020-01-01 .. 2020-06-08


def small_world(n_sources=2, seed=0):
    """In-memory config and series for fast end-to-end runs."""
    names = [f"S{i}" for i in range(n_sources)]
    series, entries = {}, []
    for i, name in enumerate(names):
        density = 20.0 + 10 * i
        series[name] = generate_synthetic("logistic-wave", SMALL_DAYS, name=name, start_date="2020-01-01",
                                          population_density=density, amplitude=500.0 + 200 * i,
                                          center=70.0 + 8 * i, width=10.0)
        entries.append(CountryEntry(name, f"{name}.csv", density))
    series["T"] = generate_synthetic("logistic-wave", SMALL_DAYS, name="T", start_date="2020-01-01",
                                     population_density=40.0, amplitude=400.0, center=110.0, width=10.0)
    entries.append(CountryEntry("T", "T.csv", 40.0))
    cfg = ExperimentConfig(
        countries=entries, target="T", dates=SMALL_DATES, lookback=7, horizon=7,
        train=TrainConfig(epochs=3, hidden_size=4, batch_size=16, seed=seed, learning_rate=0.01),
        seeds=(0, 1),
    )
    return cfg, series


@pytest.fixture
def world():
    return small_world()


ACCEPTANCE_LINES = []


def record_acceptance(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
