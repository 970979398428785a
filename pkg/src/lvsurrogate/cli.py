"""Command-line entry point: ``python -m lvsurrogate <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiments as ex
from .grid_model import FixtureKind, GridSemanticError, GridSyntaxError, build_fixture, serialize_grid
from .power_flow import PowerFlowError
from .profiles import (generate_dataset, load_dataset, load_profiles, save_dataset, save_profiles,
                       scenario_profiles)
from .surrogate import MlpDivergenceError, save_model
from .surrogate.linear import RankDeficientError

log = logging.getLogger("lvsurrogate")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p, out=True):
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, help="worker processes for dataset generation")
    p.add_argument("--grid", help="fixture name or grid JSON path (overrides the config)")
    if out:
        p.add_argument("--out-dir", default="out", help="directory for report files")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lvsurrogate", description="Power-flow surrogate benchmark")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fixture", help="write a built-in grid as JSON")
    p.add_argument("--kind", required=True, choices=[k.value for k in FixtureKind])
    p.add_argument("-o", "--output", help="output path (default: standard output)")

    p = sub.add_parser("synth", help="write synthetic year profiles as CSV")
    _common(p, out=False)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("dataset", help="run the power-flow sweep and write the dataset CSV")
    _common(p, out=False)
    p.add_argument("--profiles", help="profiles CSV (default: synthesize from the seed)")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train", help="tune and fit every configured contender, save models")
    _common(p)
    p.add_argument("--dataset", help="dataset CSV (default: generate)")

    p = sub.add_parser("exp1", help="accuracy experiment")
    _common(p)
    p.add_argument("--dataset", help="dataset CSV (default: generate)")

    p = sub.add_parser("exp2", help="timing experiment")
    _common(p)
    p.add_argument("--dataset", help="dataset CSV (default: generate)")
    p.add_argument("--n-reps", type=int, help="repetitions (overrides the config)")

    p = sub.add_parser("report", help="render report.md from accuracy.json and timing.json")
    p.add_argument("--out-dir", default="out")
    p.add_argument("-o", "--output", help="output path (default: <out-dir>/report.md)")
    return parser


def _config(args) -> ex.RunConfig:
    cfg = ex.RunConfig.load(args.config) if args.config else ex.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.grid is not None:
        cfg.fixture = args.grid
    if getattr(args, "n_reps", None) is not None:
        cfg.n_reps = args.n_reps
    cfg.__post_init__()
    return cfg


def _check_paths(*paths):
    for path in paths:
        if path and not os.path.exists(path):
            raise FileNotFoundError(f"no such file: {path}")


def _grid(cfg):
    if cfg.fixture not in {k.value for k in FixtureKind}:
        _check_paths(cfg.fixture)
    return cfg.grid()


def _dataset(cfg, path):
    grid = _grid(cfg)
    if path:
        _check_paths(path)
        ds = load_dataset(path)
        if ds.meta.get("grid_hash") not in (None, grid.digest()):
            raise ValueError(f"{path} was generated from a different grid")
        return grid, ds
    log.info("generating dataset for %s (seed %d)", cfg.fixture, cfg.seed)
    return ex.prepare_dataset(cfg, grid)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_fixture(args):
    grid = build_fixture(args.kind)
    _write(args.output, serialize_grid(grid) + "\n")


def cmd_synth(args):
    cfg = _config(args)
    grid = _grid(cfg)
    save_profiles(scenario_profiles(grid, cfg.seed, cos_phi=cfg.cos_phi), args.output)


def cmd_dataset(args):
    cfg = _config(args)
    grid = _grid(cfg)
    if args.profiles:
        _check_paths(args.profiles)
        profiles = load_profiles(args.profiles)
    else:
        profiles = scenario_profiles(grid, cfg.seed, cos_phi=cfg.cos_phi)
    ds = generate_dataset(grid, profiles, cfg.pf_options, jobs=cfg.jobs,
                          meta={"seed": cfg.seed, "cos_phi": cfg.cos_phi})
    save_dataset(ds, args.output)


def cmd_train(args):
    cfg = _config(args)
    _, ds = _dataset(cfg, args.dataset)
    data, folds = ex.tuning_split(ds, cfg.tune_months, cfg.tune_stride)
    out = os.path.join(args.out_dir, "models")
    os.makedirs(out, exist_ok=True)
    for c in cfg.contenders:
        hp, score = ex.tune(c, data, folds, cfg.seed)
        model = ex.make_model(c.family, hp, cfg.seed).fit(ds.inputs, ds.targets)
        model.metadata = {"name": c.name, "tuning_rmse": score, "seed": cfg.seed}
        path = os.path.join(out, c.name.replace(" ", "_") + ".npz")
        save_model(model, path)
        log.info("saved %s", path)


def cmd_exp1(args):
    cfg = _config(args)
    grid, ds = _dataset(cfg, args.dataset)
    report = ex.run_accuracy_experiment(grid, ds, cfg.contenders, cfg.seed, cfg.tune_months,
                                        cfg.tune_stride)
    _write(os.path.join(args.out_dir, "accuracy.csv"), ex.emit_report(report, "csv"))
    _write(os.path.join(args.out_dir, "accuracy.json"), ex.emit_report(report, "json"))
    _write(os.path.join(args.out_dir, "report.md"), ex.render_markdown(report))


def cmd_exp2(args):
    cfg = _config(args)
    grid, ds = _dataset(cfg, args.dataset)
    acc_path = os.path.join(args.out_dir, "accuracy.json")
    if os.path.exists(acc_path):
        accuracy = ex.AccuracyReport.from_dict(_read_json(acc_path))
    else:
        log.info("no %s; tuning without cross-validation", acc_path)
        data, folds = ex.tuning_split(ds, cfg.tune_months, cfg.tune_stride)
        accuracy = ex.AccuracyReport()
        for c in cfg.contenders:
            hp, score = ex.tune(c, data, folds, cfg.seed)
            accuracy.models.append(c.name)
            accuracy.families[c.name] = c.family
            accuracy.hyperparameters[c.name] = hp
    models = ex.fit_final_models(ds, accuracy, cfg.seed)
    timing = ex.run_timing_experiment(grid, ds, models, cfg.n_reps, cfg.pf_options)
    timing.tests = ex.run_stats_battery(timing, cfg.alpha)
    _write(os.path.join(args.out_dir, "timing.json"), ex.emit_report(timing, "json"))
    shown = accuracy if accuracy.fold_rmse else None
    _write(os.path.join(args.out_dir, "report.md"), ex.render_markdown(shown, timing))


def cmd_report(args):
    acc_path = os.path.join(args.out_dir, "accuracy.json")
    tim_path = os.path.join(args.out_dir, "timing.json")
    if not (os.path.exists(acc_path) or os.path.exists(tim_path)):
        raise FileNotFoundError(f"neither {acc_path} nor {tim_path} exists")
    accuracy = ex.AccuracyReport.from_dict(_read_json(acc_path)) if os.path.exists(acc_path) else None
    timing = ex.TimingReport.from_dict(_read_json(tim_path)) if os.path.exists(tim_path) else None
    _write(args.output or os.path.join(args.out_dir, "report.md"), ex.render_markdown(accuracy, timing))


COMMANDS = {"fixture": cmd_fixture, "synth": cmd_synth, "dataset": cmd_dataset, "train": cmd_train,
            "exp1": cmd_exp1, "exp2": cmd_exp2, "report": cmd_report}

RUNTIME_ERRORS = (OSError, ValueError, KeyError, GridSyntaxError, GridSemanticError, PowerFlowError,
                  MlpDivergenceError, RankDeficientError)


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except RUNTIME_ERRORS as exc:
        print(f"lvsurrogate {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(dispatch())
