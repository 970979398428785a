"""Accuracy (monthly cross-validation) and timing (speed-up) experiments."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .grid_model import FixtureKind, Grid, build_fixture, load_grid
from .metrics import RMSE_THRESHOLD, rmse, rmse_per_column, verdict
from .power_flow import NonConvergence, PFOptions
from .profiles import ScenarioDataset, generate_dataset, monthly_folds, scenario_profiles, simulate
from .stats import anova_oneway, levene, pairwise_welch, shapiro_wilk
from .surrogate import (Family, default_space, grid_search_cv, make_model, random_search_cv,
                        space_from_json)

log = logging.getLogger(__name__)

SIMULATION = "Sim"
SEARCH_MODES = ("random", "grid", "fixed")

__all__ = ["rmse", "verdict", "RMSE_THRESHOLD", "SIMULATION", "Contender", "default_contenders",
           "RunConfig", "prepare_dataset", "AccuracyReport", "tuning_split", "tune",
           "run_accuracy_experiment", "fit_final_models", "TimingReport", "speedup_factor",
           "run_timing_experiment", "run_stats_battery", "emit_report", "render_markdown"]


# --------------------------------------------------------------------------
# configuration

@dataclass
class Contender:
    name: str
    family: str
    search: str = "random"
    space: dict = field(default_factory=dict)    # JSON domains overriding the family default
    fixed: dict = field(default_factory=dict)    # hyperparameters held constant
    budget: int = 20

    def __post_init__(self):
        self.family = Family(self.family).value
        if self.search not in SEARCH_MODES:
            raise ValueError(f"search must be one of {SEARCH_MODES}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


def default_contenders() -> list[Contender]:
    linear = {"allow_collinear": True}
    return [
        Contender("RE LR", "ReLr", "grid", fixed=linear),
        Contender("RC LR", "RcLr", "grid", fixed=linear),
        Contender("RE RF", "ReRf", "random"),
        Contender("k-NN", "Knn", "grid"),
        Contender("MLP", "Mlp", "random", space={"task_specific_layers": {"int": [1, 2]}}),
        Contender("MLP dense", "Mlp", "random", fixed={"task_specific_layers": 0}),
    ]


@dataclass
class RunConfig:
    fixture: str = FixtureKind.CIGRE_LV_LIKE.value   # fixture name or path to a grid JSON
    seed: int = 0
    cos_phi: float | None = 0.9                      # None: reactive power varies independently
    pf_tol_pu: float = 1e-8
    pf_max_iter: int = 30
    jobs: int = 1
    contenders: list = field(default_factory=default_contenders)
    tune_months: list = field(default_factory=lambda: [1, 7])
    tune_stride: int = 4
    n_reps: int = 10
    alpha: float = 0.05

    def __post_init__(self):
        self.contenders = [c if isinstance(c, Contender) else Contender(**c) for c in self.contenders]
        names = [c.name for c in self.contenders]
        if len(set(names)) != len(names) or SIMULATION in names:
            raise ValueError(f"contender names must be unique and not {SIMULATION!r}")
        if not self.tune_months or not set(self.tune_months) <= set(range(1, 13)):
            raise ValueError("tune_months must be a nonempty subset of 1..12")
        if self.tune_stride < 1 or self.n_reps < 2 or self.jobs < 1:
            raise ValueError("tune_stride >= 1, n_reps >= 2 and jobs >= 1 required")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config keys {unknown}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def pf_options(self) -> PFOptions:
        return PFOptions(tol_pu=self.pf_tol_pu, max_iter=self.pf_max_iter)

    def grid(self) -> Grid:
        if self.fixture in {k.value for k in FixtureKind}:
            return build_fixture(self.fixture)
        return load_grid(self.fixture)


def prepare_dataset(config: RunConfig, grid: Grid | None = None) -> tuple[Grid, ScenarioDataset]:
    grid = grid or config.grid()
    profiles = scenario_profiles(grid, config.seed, cos_phi=config.cos_phi)
    ds = generate_dataset(grid, profiles, config.pf_options, jobs=config.jobs,
                          meta={"seed": config.seed, "cos_phi": config.cos_phi})
    return grid, ds


# --------------------------------------------------------------------------
# accuracy experiment

@dataclass
class AccuracyReport:
    models: list = field(default_factory=list)
    families: dict = field(default_factory=dict)
    hyperparameters: dict = field(default_factory=dict)
    tuning_rmse: dict = field(default_factory=dict)
    fold_rmse: dict = field(default_factory=dict)       # name -> 12 values, nan on failure
    bus_rmse: dict = field(default_factory=dict)        # name -> per-target values
    subgrid_rmse: dict = field(default_factory=dict)    # name -> {label: value}
    target_columns: list = field(default_factory=list)
    errors: list = field(default_factory=list)          # {"model", "fold", "error"}
    threshold: float = RMSE_THRESHOLD

    def yearly_rmse(self, name) -> float:
        return float(np.mean(self.fold_rmse[name]))

    def verdict(self, name) -> bool:
        value = self.yearly_rmse(name)
        return bool(np.isfinite(value)) and verdict(value, self.threshold)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["yearly_rmse"] = {m: self.yearly_rmse(m) for m in self.models}
        out["verdict"] = {m: self.verdict(m) for m in self.models}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "AccuracyReport":
        known = {f.name for f in fields(cls)}
        return cls(**{k: _restore(v) for k, v in raw.items() if k in known})


def tuning_split(dataset: ScenarioDataset, months, stride):
    """Row-thinned copy of the data plus leave-one-month-out folds for ``months``."""
    rows = np.arange(0, len(dataset), stride)
    X, Y, mon = dataset.inputs[rows], dataset.targets[rows], np.asarray(dataset.month_index)[rows]
    folds = [(np.flatnonzero(mon != m), np.flatnonzero(mon == m)) for m in months]
    return (X, Y), folds


def tune(contender: Contender, data, folds, seed):
    """Best hyperparameters for one contender and their tuning RMSE."""
    if contender.search == "fixed":
        return dict(contender.fixed), math.nan
    base = default_space(contender.family, data[0].shape[1])
    space = space_from_json(contender.space, base)
    for name in contender.fixed:
        space.pop(name, None)
    if contender.search == "grid":
        res = grid_search_cv(contender.family, space, data, folds, seed=seed, fixed=contender.fixed)
    else:
        res = random_search_cv(contender.family, space, data, folds, contender.budget, seed=seed,
                               fixed=contender.fixed)
    return res.best, res.score


def run_accuracy_experiment(grid: Grid, dataset: ScenarioDataset, contenders, seed=0,
                            tune_months=(1, 7), tune_stride=4) -> AccuracyReport:
    """Tune every contender once on a thinned subset of months, then run the
    twelve leave-one-month-out folds with those hyperparameters."""
    contenders = [c if isinstance(c, Contender) else Contender(**c) for c in contenders]
    report = AccuracyReport(target_columns=list(dataset.target_columns))
    if not contenders:
        return report
    tune_data, tune_folds = tuning_split(dataset, tune_months, tune_stride)
    folds = monthly_folds(dataset)
    X, Y = dataset.inputs, dataset.targets
    subgrids = _subgrid_columns(grid, dataset)
    for c in contenders:
        log.info("tuning %s", c.name)
        hp, score = tune(c, tune_data, tune_folds, seed)
        log.info("%s: %s (tuning rmse %.3g)", c.name, hp, score)
        pred = np.full_like(Y, np.nan)
        fold_rmse = []
        for k, (train, test) in enumerate(folds, start=1):
            try:
                model = make_model(c.family, hp, seed).fit(X[train], Y[train])
                pred[test] = model.predict(X[test])
                fold_rmse.append(rmse(Y[test], pred[test]))
            except Exception as exc:       # a failed fold is recorded, the run goes on
                report.errors.append({"model": c.name, "fold": k, "error": f"{type(exc).__name__}: {exc}"})
                fold_rmse.append(math.nan)
        report.models.append(c.name)
        report.families[c.name] = c.family
        report.hyperparameters[c.name] = hp
        report.tuning_rmse[c.name] = score
        report.fold_rmse[c.name] = fold_rmse
        report.bus_rmse[c.name] = rmse_per_column(Y, pred).tolist()
        report.subgrid_rmse[c.name] = {label: rmse(Y[:, cols], pred[:, cols])
                                       for label, cols in subgrids.items()}
    return report


def _subgrid_columns(grid, dataset):
    col = {name: j for j, name in enumerate(dataset.target_columns)}
    return {label: [col[f"bus{b}.vm_pu"] for b in buses]
            for label, buses in sorted(grid.subgrids().items())}


def fit_final_models(dataset: ScenarioDataset, report: AccuracyReport, seed=0) -> dict:
    """Refit every contender of ``report`` on the whole year."""
    return {name: make_model(report.families[name], report.hyperparameters[name], seed)
            .fit(dataset.inputs, dataset.targets) for name in report.models}


# --------------------------------------------------------------------------
# timing experiment

def speedup_factor(t_sim, t_sur) -> float:
    """Mean simulation time over mean surrogate time."""
    t_sim = np.asarray(t_sim, float)
    t_sur = np.asarray(t_sur, float)
    if t_sim.size == 0 or t_sur.size == 0:
        raise ValueError("empty timing list")
    if (t_sim <= 0).any() or (t_sur <= 0).any():
        raise ValueError("times must be positive")
    return float(t_sim.mean() / t_sur.mean())


@dataclass
class TimingReport:
    contenders: list = field(default_factory=list)
    times: dict = field(default_factory=dict)        # name -> seconds per repetition
    n_steps: int = 0
    errors: dict = field(default_factory=dict)       # name -> reason the contender was aborted
    tests: dict = field(default_factory=dict)

    def mean(self, name):
        return float(np.mean(self.times[name]))

    def std(self, name):
        return float(np.std(self.times[name], ddof=1))

    def suf(self, name):
        return speedup_factor(self.times[SIMULATION], self.times[name])

    def to_dict(self) -> dict:
        out = asdict(self)
        ok = [n for n in self.contenders if n in self.times]
        out["mean"] = {n: self.mean(n) for n in ok}
        out["std"] = {n: self.std(n) for n in ok}
        out["suf"] = {n: self.suf(n) for n in ok} if SIMULATION in self.times else {}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "TimingReport":
        known = {f.name for f in fields(cls)}
        return cls(**{k: _restore(v) for k, v in raw.items() if k in known})


def run_timing_experiment(grid: Grid, dataset: ScenarioDataset, fitted_models: dict, n_reps=10,
                          opts: PFOptions = PFOptions()) -> TimingReport:
    """Wall-clock time of computing every step of ``dataset``, per contender.

    The simulation runs one serial power flow per step; surrogates predict
    the whole input matrix. Each contender gets one untimed warm-up pass, then
    repetitions are interleaved across contenders.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")
    p, q = dataset.inputs[:, 0::2], dataset.inputs[:, 1::2]
    jobs = {SIMULATION: lambda: simulate(grid, p, q, opts, jobs=1)}
    for name, model in fitted_models.items():
        jobs[name] = (lambda m: lambda: m.predict(dataset.inputs))(model)
    report = TimingReport(contenders=list(jobs), n_steps=len(dataset))
    live = {}
    for name, job in jobs.items():
        try:
            job()
            live[name] = []
        except NonConvergence as exc:
            report.errors[name] = str(exc)
    for _ in range(n_reps):
        for name in live:
            t0 = time.perf_counter()
            jobs[name]()
            live[name].append(time.perf_counter() - t0)
    report.times = live
    return report


def run_stats_battery(timing: TimingReport, alpha=0.05) -> dict:
    """Levene, Shapiro-Wilk per group, one-way ANOVA and Bonferroni-adjusted
    pairwise Welch tests on the recorded times."""
    groups = {n: timing.times[n] for n in timing.contenders if n in timing.times}
    if len(groups) < 2:
        raise ValueError("need at least two timed contenders")
    values = list(groups.values())
    shapiro = {}
    for name, g in groups.items():
        try:
            shapiro[name] = shapiro_wilk(g).as_dict()
        except ValueError as exc:          # fewer than 3 samples or constant times
            shapiro[name] = {"error": str(exc)}
    pairs = pairwise_welch(groups)
    m = len(pairs)
    return {
        "alpha": alpha,
        "n_pairs": m,
        "adjusted_alpha": alpha / m,
        "levene": levene(values).as_dict(),
        "shapiro_wilk": shapiro,
        "anova": anova_oneway(values).as_dict(),
        "pairwise_welch": [{"a": a, "b": b, **r.as_dict(), "p_adjusted": padj,
                            "significant": bool(padj < alpha)} for a, b, r, padj in pairs],
    }


# --------------------------------------------------------------------------
# reports

def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.10g}"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    # JSON has no nan/inf: write them as strings
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


_NONFINITE = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}


def _restore(o):
    # inverse of _clean
    if isinstance(o, str):
        return _NONFINITE.get(o, o)
    if isinstance(o, dict):
        return {k: _restore(v) for k, v in o.items()}
    if isinstance(o, list):
        return [_restore(v) for v in o]
    return o


def emit_report(report, fmt: str, accuracy: AccuracyReport | None = None) -> str:
    """Render an AccuracyReport or TimingReport as ``csv``, ``json`` or ``markdown``.

    For a TimingReport, ``accuracy`` supplies the RMSE column of the markdown table.
    """
    if fmt == "json":
        return json.dumps(_clean(report.to_dict()), indent=1, sort_keys=True, default=_json_default) + "\n"
    if fmt == "csv":
        return _csv(report)
    if fmt == "markdown":
        if isinstance(report, TimingReport):
            return _timing_markdown(report, accuracy)
        return _accuracy_markdown(report)
    raise ValueError(f"unknown format {fmt!r}")


def _csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(report, AccuracyReport):
        w.writerow(["model", "family", "fold", "rmse"])
        for name in report.models:
            for k, v in enumerate(report.fold_rmse[name], start=1):
                w.writerow([name, report.families[name], k, _num(v)])
    else:
        w.writerow(["contender", "repetition", "seconds"])
        for name in report.contenders:
            for k, v in enumerate(report.times.get(name, []), start=1):
                w.writerow([name, k, _num(v)])
    return buf.getvalue()


def _accuracy_markdown(report: AccuracyReport) -> str:
    lines = ["| Model | RMSE | Verdict |", "|---|---|---|"]
    for name in report.models:
        lines.append(f"| {name} | {report.yearly_rmse(name):.3e} | "
                     f"{'pass' if report.verdict(name) else 'fail'} |")
    labels = sorted({lab for v in report.subgrid_rmse.values() for lab in v})
    if labels:
        lines += ["", "| Model | " + " | ".join(labels) + " |", "|---" * (len(labels) + 1) + "|"]
        for name in report.models:
            vals = " | ".join(f"{report.subgrid_rmse[name][lab]:.3e}" for lab in labels)
            lines.append(f"| {name} | {vals} |")
    return "\n".join(lines) + "\n"


def _timing_markdown(report: TimingReport, accuracy) -> str:
    lines = ["| Model | RMSE | Calc. [s] | StD. | SUF |", "|---|---|---|---|---|"]
    for name in report.contenders:
        if accuracy is not None and name in accuracy.fold_rmse:
            err = f"{accuracy.yearly_rmse(name):.3e}"
        else:
            err = "-"
        if name not in report.times:
            lines.append(f"| {name} | {err} | aborted | - | - |")
            continue
        suf = f"{report.suf(name):.6g}" if SIMULATION in report.times else "-"
        lines.append(f"| {name} | {err} | {report.mean(name):.6g} | {report.std(name):.6g} | {suf} |")
    return "\n".join(lines) + "\n"


def render_markdown(accuracy: AccuracyReport | None = None, timing: TimingReport | None = None) -> str:
    """Full ``report.md``: accuracy table, timing table and test summary."""
    parts = ["# Surrogate benchmark report", ""]
    if accuracy is not None:
        parts += ["## Accuracy (12 monthly folds)", "", emit_report(accuracy, "markdown")]
        if accuracy.errors:
            parts += ["Failed folds:", ""] + [f"- {e['model']} fold {e['fold']}: {e['error']}"
                                              for e in accuracy.errors] + [""]
    if timing is not None:
        parts += [f"## Timing ({timing.n_steps} steps, {len(next(iter(timing.times.values()), []))} "
                  "repetitions)", "", emit_report(timing, "markdown", accuracy)]
        for name, why in timing.errors.items():
            parts.append(f"- {name} aborted: {why}")
        t = timing.tests
        if t:
            parts += [f"Levene F = {t['levene']['statistic']:.6g} (p = {t['levene']['p_value']:.6g}); "
                      f"ANOVA F = {t['anova']['statistic']:.6g} (p = {t['anova']['p_value']:.6g}); "
                      f"{t['n_pairs']} pairwise Welch tests at adjusted alpha {t['adjusted_alpha']:.6g}.",
                      "", "| A | B | t | df | p (adjusted) | significant |", "|---|---|---|---|---|---|"]
            for r in t["pairwise_welch"]:
                parts.append(f"| {r['a']} | {r['b']} | {r['statistic']:.6g} | {r['df'][0]:.6g} | "
                             f"{r['p_adjusted']:.6g} | {'yes' if r['significant'] else 'no'} |")
            parts.append("")
    return "\n".join(parts).rstrip("\n") + "\n"
