"""Full study orchestration: member training, ensembles over every source
subset, test-period scoring, look-back sweeps, seed stability and grid search.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import itertools
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import FEATURES, ONE_DAY, CountrySeries, as_date
from .ensemble import ValidationScore, combine, compute_weights, enumerate_combinations
from .errors import EpicastError, PartialFailureError
from .forecast import ForecastResult, forecast_from, persistence_baseline, write_forecasts
from .gru import GruModel, TrainConfig
from .metrics import evaluate_values
from .transfer import finetune, pretrain, train_target_only

log = logging.getLogger(__name__)

ERROR_COLUMNS = tuple(f"{m}_{v}" for v in FEATURES for m in ("rmse", "rmae"))
TABLE_COLUMNS = ("combination",) + ERROR_COLUMNS


def forecast_origins(start, end, horizon: int) -> list[dt.date]:
    """Non-overlapping origins from ``start``; a final partial window is dropped."""
    start, end = as_date(start), as_date(end)
    out = []
    origin = start
    while origin + (horizon - 1) * ONE_DAY <= end:
        out.append(origin)
        origin += horizon * ONE_DAY
    return out


def file_label(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", label).strip("-")


@dataclass
class Members:
    pretrained: dict  # source name -> GruModel
    final: dict  # source name -> GruModel used for forecasting
    target_only: GruModel


def _guard(member: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (EpicastError, ArithmeticError, ValueError) as exc:
        raise PartialFailureError(member, exc) from exc


def train_members(config: ExperimentConfig, series: dict, pretrained: dict | None = None,
                  target_only: GruModel | None = None) -> Members:
    """Pre-train each source (unless given), fine-tune if enabled, train the target-only model."""
    target = series[config.target]
    cfg = config.train
    pre = dict(pretrained or {})
    for name in config.sources:
        if name not in pre:
            log.info("pre-training %s (lookback %d, seed %d)", name, config.lookback, cfg.seed)
            pre[name] = _guard(name, pretrain, series[name], config.dates.pretrain, config.lookback, cfg)
    final = {}
    for name in config.sources:
        if config.finetune_enabled:
            log.info("fine-tuning %s on %s", name, config.target)
            final[name] = _guard(name, finetune, pre[name], target, config.dates.finetune, cfg)
        else:
            final[name] = pre[name]
    if target_only is None:
        log.info("training %s-only model", config.target)
        target_only = _guard(f"{config.target}-only", train_target_only, target,
                             config.dates.target_only, config.lookback, cfg)
    return Members(pre, final, target_only)


def _forecasts(model, target: CountrySeries, origins, horizon, member_id) -> list[ForecastResult]:
    return [_guard(member_id, forecast_from, model, target, o, horizon, member_id) for o in origins]


def _truth_for(target: CountrySeries, forecasts) -> np.ndarray:
    rows = []
    for fc in forecasts:
        i = target.index_of(fc.start_date)
        target.index_of(fc.dates[-1])
        rows.append(target.values[i : i + fc.horizon])
    return np.concatenate(rows)


def score_forecasts(target: CountrySeries, forecasts):
    """Relative RMSE / RMAE per variable over all days of all given forecasts."""
    truth = _truth_for(target, forecasts)
    pred = np.concatenate([fc.values for fc in forecasts])
    return evaluate_values(truth, pred, forecasts[0].start_date)


@dataclass(frozen=True)
class ResultRow:
    label: str
    members: tuple
    rmse: np.ndarray
    rmae: np.ndarray

    def cells(self) -> list[float]:
        out = []
        for v in range(len(FEATURES)):
            out += [float(self.rmse[v]), float(self.rmae[v])]
        return out


@dataclass
class ResultTable:
    rows: list
    regime: str
    header: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, label: str) -> ResultRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# regime: {self.regime}\n")
        for k, v in self.header.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.rows:
            w.writerow([r.label] + [repr(x) for x in r.cells()])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def read_results_table(path) -> tuple[dict, list[dict]]:
    """Returns ``(header, rows)``; row values are floats except the label."""
    header, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            header[key] = value
        elif line:
            lines.append(line)
    rows = []
    for rec in csv.DictReader(lines):
        rows.append({k: (v if k == "combination" else float(v)) for k, v in rec.items()})
    return header, rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    table: ResultTable
    members: Members
    scores: dict  # member id -> ValidationScore
    specs: dict  # combination label -> EnsembleSpec
    forecasts: dict  # row label -> list[ForecastResult], one per test origin
    validation_origins: list
    test_origins: list
    baseline: object  # EvaluationReport for the persistence forecast

    def report(self) -> dict:
        return {
            "mode": self.config.ensemble_mode,
            "rmse_pooling": "mean of variables" if self.config.pooled_rmse else "per variable",
            "regime": self.table.regime,
            "members": list(self.scores),
            "validation_origins": [o.isoformat() for o in self.validation_origins],
            "test_origins": [o.isoformat() for o in self.test_origins],
            "validation_scores": {
                m: dict(zip(FEATURES, map(float, s.rmse))) for m, s in self.scores.items()
            },
            "combinations": {label: spec.to_dict() for label, spec in self.specs.items()},
            "persistence_baseline": {
                "rmse": dict(zip(FEATURES, map(float, self.baseline.rmse))),
                "rmae": dict(zip(FEATURES, map(float, self.baseline.rmae))),
            },
        }


def combination_label(combo) -> str:
    return " - ".join(combo)


def run_full_experiment(config: ExperimentConfig, series: dict | None = None, seed: int | None = None,
                        pretrained: dict | None = None, target_only: GruModel | None = None,
                        ) -> ExperimentResult:
    """Train, ensemble every non-empty source subset, and score on the test range.

    ``pretrained`` / ``target_only`` let a caller reuse models across regimes;
    they must have been trained with the same config and seed.
    """
    if seed is not None:
        config = config.with_seed(seed)
    series = series if series is not None else config.load_all()
    target = series[config.target]
    H = config.horizon
    members = train_members(config, series, pretrained, target_only)

    val_origins = forecast_origins(config.dates.validate_from, config.dates.validate_to, H)
    test_origins = forecast_origins(config.dates.test_from, config.dates.test_to, H)
    if not val_origins or not test_origins:
        raise EpicastError("validation and test ranges must each hold at least one full horizon")

    scores = {}
    test_fc = {}
    for name in config.sources:
        model = members.final[name]
        val = _forecasts(model, target, val_origins, H, name)
        scores[name] = _guard(name, ValidationScore, name, score_forecasts(target, val).rmse)
        test_fc[name] = _forecasts(model, target, test_origins, H, name)

    rows, specs, row_forecasts = [], {}, {}
    for combo in enumerate_combinations(config.sources):
        label = combination_label(combo)
        spec = compute_weights([scores[m] for m in combo], config.ensemble_mode, config.pooled_rmse)
        specs[label] = spec
        fcs = [combine([test_fc[m][k] for m in combo], spec, member_id=label)
               for k in range(len(test_origins))]
        row_forecasts[label] = fcs
        rep = score_forecasts(target, fcs)
        rows.append(ResultRow(label, combo, rep.rmse, rep.rmae))

    own_label = f"{config.target} Model"
    own = _forecasts(members.target_only, target, test_origins, H, own_label)
    row_forecasts[own_label] = own
    rep = score_forecasts(target, own)
    rows.append(ResultRow(own_label, (f"{config.target}-only",), rep.rmse, rep.rmae))

    persistence = []
    for o in test_origins:
        k = target.index_of(o - ONE_DAY)
        ctx = CountrySeries(target.country_name, target.population_density, o - ONE_DAY, target.values[k : k + 1])
        persistence.append(persistence_baseline(ctx, H))
    baseline = score_forecasts(target, persistence)

    regime = "fine-tuned" if config.finetune_enabled else "not-fine-tuned"
    header = {
        "target": config.target,
        "ensemble_mode": config.ensemble_mode + (" (pooled RMSE)" if config.pooled_rmse else " (per-variable RMSE)"),
        "evaluation": (
            f"rolling non-overlapping {H}-day origins "
            + ", ".join(o.isoformat() for o in test_origins)
            + "; partial final window dropped"
        ),
        "metrics": f"relative RMSE/RMAE summed over all {H * len(test_origins)} forecast days",
        "lookback": config.lookback,
        "seed": config.train.seed,
    }
    table = ResultTable(rows, regime, header)
    return ExperimentResult(config, table, members, scores, specs, row_forecasts,
                            val_origins, test_origins, baseline)


def run_both_regimes(config: ExperimentConfig, series: dict | None = None, seed: int | None = None):
    """(fine-tuned, not-fine-tuned) results sharing the same pre-trained models."""
    if seed is not None:
        config = config.with_seed(seed)
    series = series if series is not None else config.load_all()
    tuned = run_full_experiment(config.replace(finetune_enabled=True), series)
    plain = run_full_experiment(config.replace(finetune_enabled=False), series,
                                pretrained=tuned.members.pretrained,
                                target_only=tuned.members.target_only)
    return tuned, plain


def write_experiment(result: ExperimentResult, out_dir, table_name: str = "results_table.csv") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.table.write(out / table_name)
    for label, fcs in result.forecasts.items():
        for fc in fcs:
            write_forecasts([fc], out / f"forecast_{file_label(label)}_{fc.start_date.isoformat()}.csv")
    (out / "ensemble_report.json").write_text(json.dumps(result.report(), indent=2) + "\n", encoding="utf-8")


def best_combination_rmse(table: ResultTable) -> np.ndarray:
    """Per-variable minimum RMSE over the ensemble rows (target-only row excluded)."""
    ens = [r.rmse for r in table.rows if len(r.members) and not r.label.endswith(" Model")]
    return np.min(np.stack(ens), axis=0)


@dataclass
class SweepResult:
    lookbacks: list
    seeds: list
    per_seed: dict  # (lookback, seed) -> (3,) best-combination RMSE

    def curve(self) -> dict:
        return {L: np.mean([self.per_seed[(L, s)] for s in self.seeds], axis=0) for L in self.lookbacks}

    def spread(self) -> dict:
        return {L: np.std([self.per_seed[(L, s)] for s in self.seeds], axis=0) for L in self.lookbacks}

    def selected(self, seed=None) -> int:
        """Look-back with the lowest RMSE summed over variables (first on ties)."""
        if seed is None:
            values = self.curve()
        else:
            values = {L: self.per_seed[(L, seed)] for L in self.lookbacks}
        return min(self.lookbacks, key=lambda L: (float(np.sum(values[L])), L))

    def write(self, path) -> None:
        curve, spread = self.curve(), self.spread()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lookback", "n_seeds"]
                       + [f"rmse_mean_{v}" for v in FEATURES] + [f"rmse_std_{v}" for v in FEATURES])
            for L in self.lookbacks:
                w.writerow([L, len(self.seeds)] + [repr(float(x)) for x in curve[L]]
                           + [repr(float(x)) for x in spread[L]])


def lookback_sweep(config: ExperimentConfig, lookbacks=range(7, 20), seeds=None,
                   series: dict | None = None) -> SweepResult:
    lookbacks = [int(L) for L in lookbacks]
    if any(L < 1 for L in lookbacks):
        raise ValueError("every lookback must be >= 1")
    seeds = list(config.seeds if seeds is None else seeds)
    series = series if series is not None else config.load_all()
    per_seed = {}
    for L in lookbacks:
        for s in seeds:
            res = run_full_experiment(config.replace(lookback=L), series, seed=s)
            per_seed[(L, s)] = best_combination_rmse(res.table)
    return SweepResult(lookbacks, seeds, per_seed)


@dataclass
class StabilityResult:
    seeds: list
    labels: list
    rmse: dict  # label -> (n_seeds, 3)

    def mean(self, label) -> np.ndarray:
        return self.rmse[label].mean(axis=0)

    def std(self, label) -> np.ndarray:
        return self.rmse[label].std(axis=0)  # population standard deviation

    def write(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["combination", "n_seeds"]
                       + [f"rmse_mean_{v}" for v in FEATURES] + [f"rmse_std_{v}" for v in FEATURES])
            for label in self.labels:
                w.writerow([label, len(self.seeds)]
                           + [repr(float(x)) for x in self.mean(label)]
                           + [repr(float(x)) for x in self.std(label)])


def stability_from_tables(tables, seeds) -> StabilityResult:
    labels = [r.label for r in tables[0].rows]
    rmse = {label: np.stack([t.row(label).rmse for t in tables]) for label in labels}
    return StabilityResult(list(seeds), labels, rmse)


def multi_seed_stability(config: ExperimentConfig, seeds=None, series: dict | None = None) -> StabilityResult:
    seeds = list(config.seeds if seeds is None else seeds)
    if len(seeds) < 2:
        raise ValueError("stability analysis needs at least 2 seeds")
    series = series if series is not None else config.load_all()
    tables = [run_full_experiment(config, series, seed=s).table for s in seeds]
    return stability_from_tables(tables, seeds)


@dataclass
class GridResult:
    best: TrainConfig
    rows: list  # dicts in grid order

    def write(self, path) -> None:
        cols = ["learning_rate", "epochs", "hidden_size"] + [f"val_rmse_{v}" for v in FEATURES] + ["score", "best"]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])


def validation_score(config: ExperimentConfig, series: dict) -> np.ndarray:
    """Validation RMSE per variable of the ensemble over all sources."""
    target = series[config.target]
    members = train_members(config, series)
    origins = forecast_origins(config.dates.validate_from, config.dates.validate_to, config.horizon)
    val, scores = {}, []
    for name in config.sources:
        val[name] = _forecasts(members.final[name], target, origins, config.horizon, name)
        scores.append(ValidationScore(name, score_forecasts(target, val[name]).rmse))
    spec = compute_weights(scores, config.ensemble_mode, config.pooled_rmse)
    fcs = [combine([val[m][k] for m in config.sources], spec) for k in range(len(origins))]
    return score_forecasts(target, fcs).rmse


def grid_search(config: ExperimentConfig, grid: dict, series: dict | None = None) -> GridResult:
    """Exhaustive search over learning_rate x epochs x hidden_size.

    Points are visited in lexicographic order of the sorted value lists; the
    first point with the lowest summed validation RMSE wins ties.
    """
    axes = []
    for k in ("learning_rate", "epochs", "hidden_size"):
        values = grid.get(k)
        if values is None:
            values = [getattr(config.train, k)]  # axis not searched
        if len(values) == 0:
            raise ValueError(f"grid axis {k} is empty")
        axes.append(sorted(set(values)))
    series = series if series is not None else config.load_all()
    rows, best, best_score = [], None, None
    for lr, epochs, hidden in itertools.product(*axes):
        train_cfg = config.train.replace(learning_rate=float(lr), epochs=int(epochs), hidden_size=int(hidden))
        rmse = validation_score(config.replace(train=train_cfg), series)
        score = float(np.sum(rmse))
        row = {"learning_rate": float(lr), "epochs": int(epochs), "hidden_size": int(hidden), "score": score}
        row.update({f"val_rmse_{v}": float(x) for v, x in zip(FEATURES, rmse)})
        rows.append(row)
        if best_score is None or score < best_score:
            best, best_score = train_cfg, score
    for row in rows:
        row["best"] = int(
            (row["learning_rate"], row["epochs"], row["hidden_size"])
            == (best.learning_rate, best.epochs, best.hidden_size)
        )
    return GridResult(best, rows)
