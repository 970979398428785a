"""LV grid topology, JSON I/O, validation and the two benchmark fixtures.

Line and transformer parameters of the fixtures are plausible LV cable and
distribution-transformer values. Only the element counts and the subgrid
structure follow the benchmark grids; impedances are stand-ins.
"""
from __future__ import annotations

import enum
import hashlib
import json
from collections import deque
from dataclasses import MISSING, asdict, dataclass
from importlib import resources

import numpy as np

__all__ = [
    "BusKind", "AttachmentKind", "Bus", "Line", "Transformer", "Attachment",
    "Grid", "Violation", "GridSyntaxError", "GridSemanticError", "FixtureKind",
    "parse_grid", "serialize_grid", "validate_grid", "build_fixture",
    "load_grid", "fixture_path",
]


class BusKind(str, enum.Enum):
    SLACK = "Slack"
    PQ = "PQ"


class AttachmentKind(str, enum.Enum):
    LOAD = "Load"
    SGEN = "SGen"


class FixtureKind(str, enum.Enum):
    CIGRE_LV_LIKE = "cigre-lv-like"
    RURAL_LV_LIKE = "rural-lv-like"


@dataclass(frozen=True)
class Bus:
    id: int
    name: str
    kind: BusKind
    vn_kv: float
    subgrid: str | None = None


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r_ohm_per_km: float
    x_ohm_per_km: float
    c_nf_per_km: float
    length_km: float


@dataclass(frozen=True)
class Transformer:
    hv_bus: int
    lv_bus: int
    sn_mva: float
    vk_percent: float
    vkr_percent: float
    ratio: float


@dataclass(frozen=True)
class Attachment:
    """A load or static generator fed by a named profile.

    The injected power is ``scaling * profile``; profiles are synthesized with
    a 1 MW peak, so ``scaling`` doubles as the peak power in MW.
    """
    bus: int
    kind: AttachmentKind
    profile_id: str
    scaling: float = 1.0


@dataclass(frozen=True)
class Grid:
    base_mva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...] = ()
    transformers: tuple[Transformer, ...] = ()
    attachments: tuple[Attachment, ...] = ()

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.kind is BusKind.SLACK)

    @property
    def loads(self) -> tuple[Attachment, ...]:
        return tuple(a for a in self.attachments if a.kind is AttachmentKind.LOAD)

    @property
    def sgens(self) -> tuple[Attachment, ...]:
        return tuple(a for a in self.attachments if a.kind is AttachmentKind.SGEN)

    def attachment_ids(self) -> list[str]:
        """Stable column names: ``load<k>`` / ``sgen<k>`` numbered per kind."""
        counts = {AttachmentKind.LOAD: 0, AttachmentKind.SGEN: 0}
        ids = []
        for a in self.attachments:
            ids.append(f"{a.kind.value.lower()}{counts[a.kind]}")
            counts[a.kind] += 1
        return ids

    def subgrids(self) -> dict[str, list[int]]:
        groups: dict[str, list[int]] = {}
        for b in self.buses:
            if b.subgrid is not None:
                groups.setdefault(b.subgrid, []).append(b.id)
        return groups

    def digest(self) -> str:
        return hashlib.sha256(serialize_grid(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Violation:
    kind: str
    element: str

    def __str__(self):
        return f"{self.kind}({self.element})"


class GridSyntaxError(ValueError):
    def __init__(self, msg, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.line = line
        self.column = column


class GridSemanticError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid grid: " + ", ".join(map(str, self.violations)))


# --------------------------------------------------------------------------
# validation

def validate_grid(grid: Grid) -> list[Violation]:
    out: list[Violation] = []
    n = grid.n_bus
    ids = [b.id for b in grid.buses]
    if ids != list(range(n)):
        out.append(Violation("NonDenseIds", f"ids={ids[:5]}..."))
    slacks = [b.id for b in grid.buses if b.kind is BusKind.SLACK]
    if not slacks:
        out.append(Violation("NoSlack", "grid"))
    elif len(slacks) > 1:
        out.append(Violation("MultipleSlack", ",".join(f"bus{i}" for i in slacks)))
    for b in grid.buses:
        if not b.vn_kv > 0:
            out.append(Violation("NonPositiveVoltage", f"bus{b.id}"))
    if grid.base_mva <= 0:
        out.append(Violation("NonPositiveBase", "base_mva"))

    def known(i):
        return isinstance(i, int) and 0 <= i < n

    edges = []
    for k, ln in enumerate(grid.lines):
        tag = f"line{k}"
        if not (known(ln.from_bus) and known(ln.to_bus)):
            out.append(Violation("DanglingBus", tag))
            continue
        if ln.from_bus == ln.to_bus:
            out.append(Violation("SelfLoop", tag))
        if not ln.length_km > 0:
            out.append(Violation("NonPositiveLength", tag))
        if not ln.x_ohm_per_km > 0:
            out.append(Violation("NonPositiveReactance", tag))
        if ln.r_ohm_per_km < 0 or ln.c_nf_per_km < 0:
            out.append(Violation("NegativeParameter", tag))
        edges.append((ln.from_bus, ln.to_bus))
    for k, tr in enumerate(grid.transformers):
        tag = f"trafo{k}"
        if not (known(tr.hv_bus) and known(tr.lv_bus)):
            out.append(Violation("DanglingBus", tag))
            continue
        if tr.hv_bus == tr.lv_bus:
            out.append(Violation("SelfLoop", tag))
        if not tr.sn_mva > 0:
            out.append(Violation("NonPositiveRating", tag))
        if not (0 <= tr.vkr_percent <= tr.vk_percent) or tr.vk_percent <= 0:
            out.append(Violation("BadShortCircuitVoltage", tag))
        if not tr.ratio > 0:
            out.append(Violation("NonPositiveRatio", tag))
        edges.append((tr.hv_bus, tr.lv_bus))
    for k, a in enumerate(grid.attachments):
        if not known(a.bus):
            out.append(Violation("DanglingBus", f"attachment{k}"))
        if a.scaling < 0:
            out.append(Violation("NegativeScaling", f"attachment{k}"))

    if n and ids == list(range(n)):
        adj: list[list[int]] = [[] for _ in range(n)]
        for i, j in edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        todo = deque([0])
        while todo:
            for j in adj[todo.popleft()]:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        out.extend(Violation("Disconnected", f"bus{i}") for i in range(n) if i not in seen)
    return out


# --------------------------------------------------------------------------
# JSON I/O

def _to_jsonable(grid: Grid) -> dict:
    d = asdict(grid)
    for b in d["buses"]:
        b["kind"] = b["kind"].value
    for a in d["attachments"]:
        a["kind"] = a["kind"].value
    return d


def serialize_grid(grid: Grid, comment: str | None = None) -> str:
    d = _to_jsonable(grid)
    if comment:
        d = {"comment": comment, **d}
    return json.dumps(d, indent=1)


def _build(cls, raw, where, convert):
    if not isinstance(raw, dict):
        raise GridSyntaxError(f"{where}: expected an object")
    names = [f for f in cls.__dataclass_fields__]
    required = [f for f, spec in cls.__dataclass_fields__.items()
                if spec.default is spec.default_factory is MISSING]
    missing = [f for f in required if f not in raw]
    if missing:
        raise GridSyntaxError(f"{where}: missing field(s) {missing}")
    unknown = set(raw) - set(names)
    if unknown:
        raise GridSyntaxError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**{k: convert.get(k, lambda v: v)(v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise GridSyntaxError(f"{where}: {exc}") from None


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected integer, got {v!r}")
    return v


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected number, got {v!r}")
    return float(v)


_BUS = {"id": _int, "vn_kv": _num, "kind": BusKind}
_LINE = {"from_bus": _int, "to_bus": _int, "r_ohm_per_km": _num,
         "x_ohm_per_km": _num, "c_nf_per_km": _num, "length_km": _num}
_TRAFO = {"hv_bus": _int, "lv_bus": _int, "sn_mva": _num, "vk_percent": _num,
          "vkr_percent": _num, "ratio": _num}
_ATT = {"bus": _int, "kind": AttachmentKind, "scaling": _num}


def parse_grid(text: str) -> Grid:
    """Parse and validate grid JSON. Raises GridSyntaxError / GridSemanticError."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(raw, dict):
        raise GridSyntaxError("top level must be an object")
    for key in ("base_mva", "buses"):
        if key not in raw:
            raise GridSyntaxError(f"missing top-level key {key!r}")
    try:
        base = _num(raw["base_mva"])
    except ValueError as exc:
        raise GridSyntaxError(f"base_mva: {exc}") from None

    def items(key, cls, conv):
        seq = raw.get(key, [])
        if not isinstance(seq, list):
            raise GridSyntaxError(f"{key}: expected a list")
        return tuple(_build(cls, r, f"{key}[{i}]", conv) for i, r in enumerate(seq))

    grid = Grid(
        base_mva=base,
        buses=items("buses", Bus, _BUS),
        lines=items("lines", Line, _LINE),
        transformers=items("transformers", Transformer, _TRAFO),
        attachments=items("attachments", Attachment, _ATT),
    )
    violations = validate_grid(grid)
    if violations:
        raise GridSemanticError(violations)
    return grid


def load_grid(path) -> Grid:
    with open(path) as fh:
        return parse_grid(fh.read())


def fixture_path(kind) -> str:
    kind = FixtureKind(kind)
    return str(resources.files("lvsurrogate") / "data" / f"{kind.value}.json")


# --------------------------------------------------------------------------
# fixtures

# (r, x) ohm/km and c nF/km of typical LV cables / overhead lines
NAYY_150 = (0.208, 0.080, 261.0)
NAYY_50 = (0.642, 0.083, 210.0)
OHL_70 = (0.443, 0.300, 10.0)
NA2XS2Y_MV = (0.161, 0.117, 273.0)


def _line(a, b, cable, length_km):
    r, x, c = cable
    return Line(a, b, r, x, c, length_km)


def _cigre_lv_like() -> Grid:
    buses = [Bus(0, "MV", BusKind.SLACK, 20.0)]
    names = {}

    def add(name, vn, sub):
        names[name] = len(buses)
        buses.append(Bus(len(buses), name, BusKind.PQ, vn, sub))

    for prefix, sub, count in (("R", "residential", 19), ("I", "industrial", 3),
                               ("C", "commercial", 21)):
        for k in range(count):
            add(f"{prefix}{k}", 20.0 if k == 0 else 0.4, sub)

    lines = [_line(0, names[p + "0"], NA2XS2Y_MV, 0.1) for p in "RIC"]
    transformers = [
        Transformer(names["R0"], names["R1"], 0.5, 4.0, 1.0, 50.0),
        Transformer(names["I0"], names["I1"], 0.15, 4.0, 1.2, 50.0),
        Transformer(names["C0"], names["C1"], 0.3, 4.0, 1.1, 50.0),
    ]
    residential = [
        ("R1", "R2", OHL_70, 0.035), ("R2", "R3", OHL_70, 0.035), ("R3", "R4", OHL_70, 0.035),
        ("R4", "R5", OHL_70, 0.035), ("R5", "R6", OHL_70, 0.035), ("R6", "R7", OHL_70, 0.035),
        ("R7", "R8", OHL_70, 0.035), ("R8", "R9", OHL_70, 0.035), ("R9", "R10", OHL_70, 0.035),
        ("R3", "R11", NAYY_50, 0.030), ("R4", "R12", NAYY_50, 0.035),
        ("R12", "R13", NAYY_50, 0.035), ("R13", "R14", NAYY_50, 0.035),
        ("R14", "R15", NAYY_50, 0.030), ("R6", "R16", NAYY_50, 0.030),
        ("R9", "R17", NAYY_50, 0.030), ("R10", "R18", NAYY_50, 0.030),
    ]
    industrial = [("I1", "I2", NAYY_150, 0.2)]
    commercial = [
        ("C1", "C2", OHL_70, 0.030), ("C2", "C3", OHL_70, 0.030), ("C3", "C4", OHL_70, 0.030),
        ("C4", "C5", OHL_70, 0.030), ("C5", "C6", OHL_70, 0.030), ("C6", "C7", OHL_70, 0.030),
        ("C7", "C8", OHL_70, 0.030), ("C8", "C9", OHL_70, 0.030),
        ("C3", "C10", NAYY_50, 0.030), ("C10", "C11", NAYY_50, 0.030),
        ("C11", "C12", NAYY_50, 0.030), ("C11", "C13", NAYY_50, 0.030),
        ("C10", "C14", NAYY_50, 0.030), ("C5", "C15", NAYY_50, 0.030),
        ("C15", "C16", NAYY_50, 0.030), ("C15", "C17", NAYY_50, 0.030),
        ("C16", "C18", NAYY_50, 0.030), ("C8", "C19", NAYY_50, 0.030),
        ("C9", "C20", NAYY_50, 0.030),
    ]
    for a, b, cable, length in residential + industrial + commercial:
        lines.append(_line(names[a], names[b], cable, length))

    # peak apparent power of the benchmark loads, kVA
    peaks = [
        ("R1", "household", 200), ("R11", "household", 15), ("R15", "household", 52),
        ("R16", "household", 55), ("R17", "household", 35), ("R18", "household", 47),
        ("I2", "industrial", 85),
        ("C1", "commercial", 120), ("C12", "commercial", 20), ("C13", "commercial", 20),
        ("C14", "commercial", 25), ("C17", "commercial", 25), ("C18", "commercial", 8),
        ("C19", "commercial", 16), ("C20", "commercial", 8),
    ]
    # profile peak = 125 % of rated active power at cos phi 0.9, which puts the
    # yearly voltage minimum near 0.87 pu
    atts = [
        Attachment(names[bus], AttachmentKind.LOAD, f"{kind}-{bus}", round(1.25 * 0.9 * kva / 1000, 6))
        for bus, kind, kva in peaks
    ]
    return Grid(1.0, tuple(buses), tuple(lines), tuple(transformers), tuple(atts))


def _rural_lv_like() -> Grid:
    rng = np.random.default_rng(3)
    buses = [Bus(0, "MV", BusKind.SLACK, 20.0), Bus(1, "LV busbar", BusKind.PQ, 0.4, "rural")]
    lines: list[Line] = []
    transformers = [Transformer(0, 1, 0.25, 4.0, 1.2, 50.0)]
    feeder_len = 21
    no_load = set()
    for f in range(6):
        first = len(buses)
        for k in range(feeder_len):
            idx = len(buses)
            buses.append(Bus(idx, f"F{f}.{k}", BusKind.PQ, 0.4, "rural"))
            if k == 0:
                parent, cable = 1, NAYY_150
            elif k < 14:
                parent, cable = idx - 1, NAYY_150
            else:
                # two laterals of length 4 and 3 hanging off the main line
                parent = first + (4 if k == 14 else 9 if k == 18 else idx - first - 1)
                cable = NAYY_50
            length = float(np.round(rng.uniform(0.03, 0.06), 4))
            lines.append(_line(parent, idx, cable, length))
        no_load.add(first)
        if f < 2:
            no_load.add(first + 4)
    load_buses = [b.id for b in buses[2:] if b.id not in no_load]
    atts = []
    for k, bus in enumerate(load_buses):
        peak = float(np.round(rng.uniform(0.004, 0.007), 6))
        atts.append(Attachment(bus, AttachmentKind.LOAD, f"household-{k}", peak))
    pv_buses = load_buses[3::7][:17]
    for k, bus in enumerate(pv_buses):
        peak = float(np.round(rng.uniform(0.02, 0.04), 6))
        atts.append(Attachment(bus, AttachmentKind.SGEN, f"pv-{k}", peak))
    return Grid(1.0, tuple(buses), tuple(lines), tuple(transformers), tuple(atts))


def build_fixture(kind) -> Grid:
    kind = FixtureKind(kind)
    grid = _cigre_lv_like() if kind is FixtureKind.CIGRE_LV_LIKE else _rural_lv_like()
    assert not validate_grid(grid)
    return grid


FIXTURE_NOTES = {
    FixtureKind.CIGRE_LV_LIKE: (
        "CIGRE-LV-like benchmark: 44 buses (MV slack + residential/industrial/commercial "
        "subgrids), 15 loads. Cable and transformer data are plausible stand-ins, not the "
        "published benchmark values. Attachment scaling = peak active power in MW."
    ),
    FixtureKind.RURAL_LV_LIKE: (
        "Rural-LV-like benchmark: 128 buses, 118 household loads, 17 PV plants on six "
        "radial feeders. Parameters are plausible stand-ins generated with a fixed seed. "
        "Attachment scaling = peak active power in MW."
    ),
}
