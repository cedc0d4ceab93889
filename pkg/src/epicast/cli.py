"""Command-line entry point: ``epicast <subcommand> [--config C] [--seed N] [--out DIR]``.

Every subcommand writes CSV/JSON files under ``--out``.  Failures exit with
status 1 and a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import experiment as ex
from .config import SEED_ENV, ExperimentConfig, default_seed, load_config
from .data import FEATURES, as_date, write_series
from .ensemble import ValidationScore, combine, compute_weights
from .errors import ConfigError, EpicastError, PartialFailureError
from .forecast import forecast_from, read_forecasts, write_forecasts
from .gru import load_model, save_model
from .metrics import evaluate_forecast
from .synthetic import KINDS, generate_synthetic
from .transfer import finetune, pretrain

log = logging.getLogger("epicast")


def _int_list(text: str) -> list[int]:
    """``"7-19"`` or ``"1,2,5"`` (ranges inclusive)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list: {text!r}")
    return out


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    elif os.environ.get(SEED_ENV):
        cfg = cfg.with_seed(default_seed())
    if getattr(args, "lookback", None) is not None:
        cfg = cfg.replace(lookback=args.lookback)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def cmd_synth(args) -> None:
    out = _out(args)
    seed = 0 if args.seed is None else args.seed
    if not args.bundle:
        s = generate_synthetic(args.kind, args.days, seed=seed, name=args.name,
                               population_density=args.density, amplitude=args.amplitude)
        write_series(s, out / f"{args.name}.csv")
        return
    # Four sources at different densities/amplitudes/phases plus a shifted target.
    variants = [
        ("SourceA", 50.0, 800.0, 0.45), ("SourceB", 120.0, 1500.0, 0.5),
        ("SourceC", 30.0, 600.0, 0.55), ("SourceD", 200.0, 2500.0, 0.6),
    ]
    countries = []
    for name, density, amp, phase in variants:
        s = generate_synthetic(args.kind, args.days, seed=seed, name=name, population_density=density,
                               amplitude=amp, center=phase * args.days)
        write_series(s, out / f"{name}.csv")
        countries.append({"name": name, "csv_path": f"{name}.csv", "population_density": density})
    target = generate_synthetic(args.kind, args.days, seed=seed + 1, name="Target", population_density=80.0,
                                amplitude=0.7 * args.amplitude, center=0.85 * args.days)
    write_series(target, out / "Target.csv")
    countries.append({"name": "Target", "csv_path": "Target.csv", "population_density": 80.0})
    cfg = {
        "target": "Target",
        "countries": countries,
        "lookback": 14,
        "horizon": 7,
        "train": {"epochs": args.epochs, "hidden_size": args.hidden, "batch_size": 32, "learning_rate": 0.005},
    }
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")


def cmd_train(args) -> None:
    cfg = _load(args)
    out = _out(args)
    name = args.country or cfg.sources[0]
    series = cfg.load_all()
    model, hist = pretrain(series[name], cfg.dates.pretrain, cfg.lookback, cfg.train, return_history=True)
    save_model(model, out / f"model_{ex.file_label(name)}.npz")
    _write_json(out / f"history_{ex.file_label(name)}.json", {"epoch_loss": list(hist.epoch_loss)})


def cmd_finetune(args) -> None:
    cfg = _load(args)
    out = _out(args)
    model = load_model(args.model)
    target = cfg.load_all()[cfg.target]
    tuned, hist = finetune(model, target, cfg.dates.finetune, cfg.train, return_history=True)
    stem = Path(args.model).stem
    save_model(tuned, out / f"{stem}_finetuned.npz")
    _write_json(out / f"history_{stem}_finetuned.json", {"epoch_loss": list(hist.epoch_loss)})


def cmd_forecast(args) -> None:
    cfg = _load(args)
    out = _out(args)
    model = load_model(args.model)
    target = cfg.load_all()[cfg.target]
    member = args.member or Path(args.model).stem
    if args.origin:
        origins = [as_date(args.origin)]
    else:
        origins = ex.forecast_origins(cfg.dates.test_from, cfg.dates.test_to, cfg.horizon)
    for o in origins:
        fc = forecast_from(model, target, o, args.horizon or cfg.horizon, member)
        write_forecasts([fc], out / f"forecast_{ex.file_label(member)}_{o.isoformat()}.csv")


def cmd_evaluate(args) -> None:
    cfg = _load(args)
    out = _out(args)
    target = cfg.load_all()[cfg.target]
    per_member: dict = {}
    for path in args.forecasts:
        for fc in read_forecasts(path):
            per_member.setdefault(fc.member_id, []).append(fc)
    report = {}
    for member, fcs in per_member.items():
        fcs.sort(key=lambda f: f.start_date)
        for fc in fcs:
            evaluate_forecast(target, fc)  # date coverage check
        rep = ex.score_forecasts(target, fcs)
        report[member] = {
            "origins": [f.start_date.isoformat() for f in fcs],
            "days": int(rep.horizon),
            "rmse": dict(zip(FEATURES, map(float, rep.rmse))),
            "rmae": dict(zip(FEATURES, map(float, rep.rmae))),
        }
    _write_json(out / "evaluation.json", report)


def cmd_ensemble(args) -> None:
    cfg = _load(args)
    out = _out(args)
    scores_raw = json.loads(Path(args.scores).read_text(encoding="utf-8"))
    groups: dict = {}
    for path in args.forecasts:
        for fc in read_forecasts(path):
            groups.setdefault(fc.start_date, {})[fc.member_id] = fc
    members = sorted({m for g in groups.values() for m in g}) if not args.members else args.members.split(",")
    scores = [ValidationScore(m, [scores_raw[m]["rmse"][v] for v in FEATURES]) for m in members]
    spec = compute_weights(scores, cfg.ensemble_mode, cfg.pooled_rmse)
    label = ex.combination_label(members)
    for origin in sorted(groups):
        fc = combine([groups[origin][m] for m in members], spec, member_id=label)
        write_forecasts([fc], out / f"forecast_{ex.file_label(label)}_{origin.isoformat()}.csv")
    _write_json(out / "ensemble_report.json", spec.to_dict(scores))


def cmd_experiment(args) -> None:
    cfg = _load(args)
    out = _out(args)
    if args.regime == "both":
        tuned, plain = ex.run_both_regimes(cfg)
        ex.write_experiment(tuned, out)
        plain.table.write(out / "results_table_not_finetuned.csv")
    else:
        res = ex.run_full_experiment(cfg.replace(finetune_enabled=args.regime == "fine-tuned"))
        ex.write_experiment(res, out)


def cmd_sweep(args) -> None:
    cfg = _load(args)
    out = _out(args)
    seeds = args.seeds if args.seeds else [cfg.train.seed]
    res = ex.lookback_sweep(cfg, args.lookbacks, seeds)
    res.write(out / "lookback_sweep.csv")
    _write_json(out / "lookback_selection.json", {
        "selected": res.selected(),
        "per_seed": {str(s): res.selected(s) for s in seeds},
    })


def cmd_stability(args) -> None:
    cfg = _load(args)
    out = _out(args)
    seeds = args.seeds if args.seeds else list(cfg.seeds)
    ex.multi_seed_stability(cfg, seeds).write(out / "stability.csv")


def cmd_grid(args) -> None:
    cfg = _load(args)
    out = _out(args)
    grid = {"learning_rate": args.learning_rates, "epochs": args.epochs, "hidden_size": args.hidden_sizes}
    res = ex.grid_search(cfg, grid)
    res.write(out / "grid.csv")
    b = res.best
    _write_json(out / "grid_best.json",
                {"learning_rate": b.learning_rate, "epochs": b.epochs, "hidden_size": b.hidden_size})


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment YAML file")
    common.add_argument("--seed", type=int, default=None, help=f"overrides {SEED_ENV} and the config seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="epicast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write synthetic series")
    s.add_argument("--kind", choices=KINDS, default="logistic-wave")
    s.add_argument("--days", type=int, default=476)
    s.add_argument("--name", default="Synthetic")
    s.add_argument("--density", type=float, default=100.0)
    s.add_argument("--amplitude", type=float, default=1000.0)
    s.add_argument("--bundle", action="store_true", help="4 sources + target + config.yaml")
    s.add_argument("--epochs", type=int, default=30, help="training epochs written to the bundle config")
    s.add_argument("--hidden", type=int, default=16, help="hidden size written to the bundle config")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="pre-train one country's model")
    s.add_argument("--country", help="defaults to the first source")
    s.add_argument("--lookback", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("finetune", parents=[common], help="fine-tune a saved model on the target")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("forecast", parents=[common], help="recursive forecasts for the target")
    s.add_argument("--model", required=True)
    s.add_argument("--origin", help="first forecast day; default: every test origin")
    s.add_argument("--horizon", type=int)
    s.add_argument("--member", help="member id written to the CSV; default: model file stem")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("evaluate", parents=[common], help="relative RMSE/RMAE of forecast CSVs")
    s.add_argument("forecasts", nargs="+")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ensemble", parents=[common], help="combine forecast CSVs by validation RMSE")
    s.add_argument("forecasts", nargs="+")
    s.add_argument("--scores", required=True, help="evaluation.json from validation forecasts")
    s.add_argument("--members", help="comma-separated member order; default: sorted ids")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("experiment", parents=[common], help="full combination table")
    s.add_argument("--regime", choices=("fine-tuned", "not-fine-tuned", "both"), default="fine-tuned")
    s.add_argument("--lookback", type=int)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep-lookback", parents=[common], help="best-combination RMSE per lookback")
    s.add_argument("--lookbacks", type=_int_list, default=list(range(7, 20)))
    s.add_argument("--seeds", type=_int_list)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("stability", parents=[common], help="mean/std RMSE across seeds")
    s.add_argument("--seeds", type=_int_list)
    s.add_argument("--lookback", type=int)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("grid-search", parents=[common], help="hyper-parameter grid on validation RMSE")
    s.add_argument("--learning-rates", type=_float_list, default=[1e-3])
    s.add_argument("--epochs", type=_int_list, default=[100])
    s.add_argument("--hidden-sizes", type=_int_list, default=[32])
    s.set_defaults(func=cmd_grid)
    return p


def _error_json(exc: BaseException) -> dict:
    err = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, PartialFailureError):
        err["member"] = exc.member
        err["cause"] = type(exc.cause).__name__
    return err


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (EpicastError, ValueError, ArithmeticError, OSError, KeyError, yaml.YAMLError) as exc:
        print(json.dumps(_error_json(exc)), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
