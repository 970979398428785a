"""Synthetic year-long 15-minute load/PV profiles and supervised dataset generation."""
from __future__ import annotations

import enum
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from .grid_model import Grid
from .power_flow import (NonConvergence, PFOptions, assemble_injections, build_ybus,
                         injection_matrix, nr_solve)

log = logging.getLogger(__name__)

STEP_MINUTES = 15
STEPS_PER_DAY = 24 * 60 // STEP_MINUTES
DAYS = 365
N_STEPS = DAYS * STEPS_PER_DAY  # 35_040
# any non-leap year works; 2019 starts on a Tuesday
START = datetime(2019, 1, 1)
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
LATITUDE_DEG = 52.0


class ProfileKind(str, enum.Enum):
    HOUSEHOLD = "household"
    COMMERCIAL = "commercial"
    INDUSTRIAL = "industrial"
    PV = "pv"


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray
    start: datetime = START
    step_minutes: int = STEP_MINUTES

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        return (isinstance(other, TimeSeries) and self.start == other.start
                and self.step_minutes == other.step_minutes
                and np.array_equal(self.values, other.values))


def month_index() -> np.ndarray:
    """Calendar month (1..12) of every step of the year."""
    return np.repeat(np.arange(1, 13), np.array(MONTH_DAYS) * STEPS_PER_DAY)


def _clock():
    t = np.arange(N_STEPS)
    day = t // STEPS_PER_DAY
    # centre of the averaging interval, hours
    hour = (t % STEPS_PER_DAY + 0.5) * STEP_MINUTES / 60
    weekday = (START.weekday() + day) % 7
    return day, hour, weekday


def _seasonal(day, peak_day, amplitude):
    return 1 + amplitude * np.cos(2 * np.pi * (day - peak_day) / DAYS)


def _bump(hour, centre, width):
    return np.exp(-0.5 * ((hour - centre) / width) ** 2)


def _household(rng):
    day, hour, weekday = _clock()
    weekend = weekday >= 5
    morning = np.where(weekend, 9.0, 7.0) + rng.normal(0, 0.3)
    evening = 19.0 + rng.normal(0, 0.4)
    shape = (0.25 + 0.45 * _bump(hour, morning, 1.3) + 0.25 * _bump(hour, 13.0, 2.0)
             + 0.9 * _bump(hour, evening, 2.0))
    base = shape * _seasonal(day, 15, 0.3)
    # persistent day-to-day level plus short-lived appliance noise
    daily = np.exp(rng.normal(0, 0.12, DAYS))[day]
    noise = rng.lognormal(-0.5 * 0.3 ** 2, 0.3, N_STEPS)
    return base * daily * noise


def _business(rng, open_h, close_h, weekend_level, season_amp):
    day, hour, weekday = _clock()
    ramp = 0.75
    on = (1 / (1 + np.exp(-(hour - open_h) / ramp))) * (1 / (1 + np.exp((hour - close_h) / ramp)))
    level = np.where(weekday == 6, weekend_level * 0.6, np.where(weekday == 5, weekend_level, 1.0))
    shape = 0.2 + 0.8 * on * level
    base = shape * _seasonal(day, 196, season_amp)
    noise = rng.normal(1.0, 0.04, N_STEPS)
    return np.clip(base * noise, 0, None)


def _pv(rng):
    day, hour, _ = _clock()
    doy = day + 1
    decl = np.radians(23.44) * np.sin(2 * np.pi * (284 + doy) / 365)
    lat = np.radians(LATITUDE_DEG)
    hour_angle = np.radians(15.0 * (hour - 12.0))
    sin_elev = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)
    clear = np.clip(sin_elev, 0, None) ** 1.2
    # cloudier winters: daily clearness drawn around a seasonal mean
    mean_clear = 0.55 + 0.2 * np.cos(2 * np.pi * (np.arange(DAYS) - 172) / DAYS)
    k = 8.0
    daily = rng.beta(mean_clear * k, (1 - mean_clear) * k)
    # intra-day passing clouds: smoothed multiplicative noise
    eps = rng.normal(0, 0.35, N_STEPS)
    smooth = np.convolve(eps, np.ones(4) / 2, mode="same")
    intraday = np.clip(1 + smooth * (1 - daily[day]), 0.1, 1.0)
    out = clear * (0.15 + 0.85 * daily[day]) * intraday
    out[sin_elev <= 0] = 0.0
    return out


def synth_profile(kind, seed: int, scale: float = 1.0) -> TimeSeries:
    """Year of 15-minute active power with peak ``scale`` MW, deterministic in ``seed``."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    kind = ProfileKind(kind)
    rng = np.random.default_rng(seed)
    if kind is ProfileKind.HOUSEHOLD:
        raw = _household(rng)
    elif kind is ProfileKind.COMMERCIAL:
        raw = _business(rng, 8.0, 18.5, 0.35, 0.25)
    elif kind is ProfileKind.INDUSTRIAL:
        raw = _business(rng, 6.0, 22.0, 0.5, 0.15)
    else:
        raw = _pv(rng)
    return TimeSeries(scale * raw / raw.max())


def q_from_constant_pf(p: TimeSeries, cos_phi: float) -> TimeSeries:
    if not 0 < cos_phi <= 1:
        raise ValueError(f"cos_phi must be in (0, 1], got {cos_phi}")
    return TimeSeries(p.values * np.tan(np.arccos(cos_phi)), p.start, p.step_minutes)


def q_from_variable_pf(p: TimeSeries, seed: int, low=0.9, high=1.0, sign=1.0) -> TimeSeries:
    """Independent reactive power series: a slowly drifting power factor in [low, high]."""
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.normal(0, 0.05, len(p)))
    walk = np.convolve(walk - walk.mean(), np.ones(16) / 16, mode="same")
    frac = 0.5 + 0.5 * np.tanh(walk / (walk.std() + 1e-12) + rng.normal(0, 0.3, len(p)))
    cos_phi = low + (high - low) * frac
    return TimeSeries(sign * p.values * np.tan(np.arccos(cos_phi)), p.start, p.step_minutes)


def profile_kind(profile_id: str) -> ProfileKind:
    return ProfileKind(profile_id.split("-", 1)[0])


def _derive_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def scenario_profiles(grid: Grid, seed: int, cos_phi: float | None = 0.9,
                      pv_cos_phi_range=(0.95, 1.0)):
    """Unit-peak (P, Q) series for every profile id used by ``grid``.

    ``cos_phi`` set: Q derived from P at that constant power factor.
    ``cos_phi`` None: independent Q series (variable phase angle); PV absorbs
    reactive power with a power factor drifting in ``pv_cos_phi_range``.
    """
    out = {}
    for a in grid.attachments:
        pid = a.profile_id
        if pid in out:
            continue
        kind = profile_kind(pid)
        p = synth_profile(kind, _derive_seed(seed, pid))
        if kind is ProfileKind.PV:
            q = q_from_variable_pf(p, _derive_seed(seed, pid + ".q"), *pv_cos_phi_range, sign=-1.0)
        elif cos_phi is not None:
            q = q_from_constant_pf(p, cos_phi)
        else:
            q = q_from_variable_pf(p, _derive_seed(seed, pid + ".q"))
        out[pid] = (p, q)
    return out


@dataclass
class ScenarioDataset:
    inputs: np.ndarray          # (T, 2 * n_attachments), MW / Mvar
    targets: np.ndarray         # (T, n_bus), vm_pu
    month_index: np.ndarray     # (T,), 1..12
    input_columns: list[str]
    target_columns: list[str]
    meta: dict = field(default_factory=dict)
    steps: np.ndarray | None = None     # (T,), step of the year of each row

    def __post_init__(self):
        if self.steps is None:
            self.steps = np.arange(len(self.inputs))
        self.steps = np.asarray(self.steps, dtype=int)
        if len(self.steps) != len(self.inputs):
            raise ValueError("steps must have one entry per row")

    def __len__(self):
        return len(self.inputs)

    def subset(self, rows) -> "ScenarioDataset":
        rows = np.asarray(rows)
        return ScenarioDataset(self.inputs[rows], self.targets[rows], np.asarray(self.month_index)[rows],
                               list(self.input_columns), list(self.target_columns), dict(self.meta),
                               self.steps[rows])


class DatasetNonConvergence(NonConvergence):
    def __init__(self, t, cause: NonConvergence):
        super(NonConvergence, self).__init__(f"power flow did not converge at timestep {t}: {cause}")
        self.t = t
        self.iterations = cause.iterations
        self.last_mismatch = cause.last_mismatch


def attachment_power(grid: Grid, profiles) -> tuple[np.ndarray, np.ndarray]:
    """(T, n_att) active and reactive power of each attachment, MW / Mvar."""
    missing = sorted({a.profile_id for a in grid.attachments} - set(profiles))
    if missing:
        raise KeyError(f"no profile for {missing}")
    p = np.column_stack([a.scaling * np.asarray(profiles[a.profile_id][0].values)
                         for a in grid.attachments]) if grid.attachments else np.zeros((N_STEPS, 0))
    q = np.column_stack([a.scaling * np.asarray(profiles[a.profile_id][1].values)
                         for a in grid.attachments]) if grid.attachments else np.zeros((N_STEPS, 0))
    return p, q


def _sweep(grid, p, q, opts, offset=0):
    ybus = build_ybus(grid)
    inc = injection_matrix(grid)
    vm = np.empty((len(p), grid.n_bus))
    for t in range(len(p)):
        try:
            vm[t] = nr_solve(ybus, assemble_injections(grid, p[t], q[t], inc), opts).vm_pu
        except NonConvergence as exc:
            raise DatasetNonConvergence(offset + t, exc) from None
    return vm


def simulate(grid: Grid, p, q, opts: PFOptions = PFOptions(), jobs: int = 1) -> np.ndarray:
    """vm_pu of every bus for every row of attachment powers ``p``/``q``."""
    if jobs <= 1 or len(p) < 2 * jobs:
        return _sweep(grid, p, q, opts)
    bounds = np.linspace(0, len(p), jobs + 1).astype(int)
    with ProcessPoolExecutor(jobs) as pool:
        futs = [pool.submit(_sweep, grid, p[a:b], q[a:b], opts, a)
                for a, b in zip(bounds[:-1], bounds[1:])]
        # gathered in submission (= timestep) order
        return np.vstack([f.result() for f in futs])


def generate_dataset(grid: Grid, profiles, opts: PFOptions = PFOptions(), jobs: int = 1,
                     meta: dict | None = None) -> ScenarioDataset:
    p, q = attachment_power(grid, profiles)
    vm = simulate(grid, p, q, opts, jobs)
    ids = grid.attachment_ids()
    inputs = np.empty((len(p), 2 * len(ids)))
    inputs[:, 0::2] = p
    inputs[:, 1::2] = q
    cols = [f"{i}.{c}" for i in ids for c in ("p", "q")]
    out_of_band = int(np.sum((vm <= 0.5) | (vm >= 1.5)))
    if out_of_band:
        log.warning("%d vm_pu values outside the (0.5, 1.5) sanity envelope", out_of_band)
    info = {"grid_hash": grid.digest(), "n_steps": len(p),
            "solver": {"method": "newton-raphson", "tol_pu": opts.tol_pu,
                       "max_iter": opts.max_iter, "flat_start": opts.flat_start},
            "units": {"p": "MW", "q": "Mvar", "vm_pu": "pu"},
            "start": START.isoformat(), "step_minutes": STEP_MINUTES,
            "out_of_band": out_of_band}
    info.update(meta or {})
    return ScenarioDataset(inputs, vm, month_index()[:len(p)], cols,
                           [f"bus{i}.vm_pu" for i in range(grid.n_bus)], info)


def monthly_folds(dataset: ScenarioDataset):
    """Leave-one-month-out splits, January first: list of (train_idx, test_idx)."""
    months = np.asarray(dataset.month_index)
    folds = []
    for m in range(1, 13):
        test = np.flatnonzero(months == m)
        train = np.flatnonzero(months != m)
        folds.append((train, test))
    return folds


# --------------------------------------------------------------------------
# persistence

def meta_path(csv_path) -> str:
    root = os.path.splitext(str(csv_path))[0]
    return root + ".meta.json"


def timestamps(steps=N_STEPS):
    """ISO timestamps of the given steps of the year, or of the first `steps` steps if an int."""
    if np.isscalar(steps):
        steps = range(steps)
    return [(START + timedelta(minutes=STEP_MINUTES * int(t))).strftime("%Y-%m-%dT%H:%M") for t in steps]


def save_dataset(ds: ScenarioDataset, path) -> None:
    frame = pd.DataFrame(np.hstack([ds.inputs, ds.targets]),
                         columns=ds.input_columns + ds.target_columns)
    frame.insert(0, "t", timestamps(ds.steps))
    frame.to_csv(path, index=False, float_format="%.12g")
    meta = dict(ds.meta, input_columns=ds.input_columns, target_columns=ds.target_columns)
    with open(meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_dataset(path) -> ScenarioDataset:
    frame = pd.read_csv(path)
    with open(meta_path(path)) as fh:
        meta = json.load(fh)
    in_cols, out_cols = meta.pop("input_columns"), meta.pop("target_columns")
    t = pd.to_datetime(frame["t"])
    steps = ((t - pd.Timestamp(START)) // pd.Timedelta(minutes=STEP_MINUTES)).to_numpy()
    return ScenarioDataset(frame[in_cols].to_numpy(float), frame[out_cols].to_numpy(float),
                           t.dt.month.to_numpy(), in_cols, out_cols, meta, steps)


def save_profiles(profiles, path) -> None:
    cols = {}
    for pid in sorted(profiles):
        p, q = profiles[pid]
        cols[f"{pid}.p"] = p.values
        cols[f"{pid}.q"] = q.values
    frame = pd.DataFrame(cols)
    frame.insert(0, "t", timestamps(len(frame)))
    frame.to_csv(path, index=False, float_format="%.12g")


def load_profiles(path):
    frame = pd.read_csv(path)
    ids = sorted({c.rsplit(".", 1)[0] for c in frame.columns if c != "t"})
    return {pid: (TimeSeries(frame[f"{pid}.p"].to_numpy()), TimeSeries(frame[f"{pid}.q"].to_numpy()))
            for pid in ids}
