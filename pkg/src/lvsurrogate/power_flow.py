"""Steady-state AC power flow on a per-unit bus model.

Newton-Raphson in polar coordinates is the production solver. Gauss-Seidel is
kept as an independent cross-check: it reaches the same fixed point through a
completely different iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .grid_model import AttachmentKind, Grid

__all__ = [
    "SYSTEM_FREQUENCY_HZ", "AdmittanceMatrix", "InjectionVector", "PowerFlowResult",
    "PFOptions", "PowerFlowError", "NonConvergence", "SingularJacobian",
    "build_ybus", "nr_solve", "gs_solve", "check_power_balance",
    "injection_matrix", "assemble_injections",
]

SYSTEM_FREQUENCY_HZ = 50.0


class PowerFlowError(RuntimeError):
    pass


class NonConvergence(PowerFlowError):
    def __init__(self, iterations, last_mismatch):
        super().__init__(f"power flow did not converge after {iterations} iterations "
                         f"(max mismatch {last_mismatch:.3e} pu)")
        self.iterations = iterations
        self.last_mismatch = last_mismatch


class SingularJacobian(PowerFlowError):
    pass


@dataclass(frozen=True, eq=False)
class AdmittanceMatrix:
    matrix: sp.csr_matrix
    slack: int = 0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def pq(self) -> np.ndarray:
        return np.array([i for i in range(self.n) if i != self.slack], dtype=int)

    @cached_property
    def _jacobian_pattern(self):
        # nonzeros of Y restricted to PQ buses, in full-bus indices, plus the
        # CSC layout of the 2x2-block Jacobian built on that pattern
        pq = self.pq
        npq = len(pq)
        sub = self.matrix[pq][:, pq].tocoo()
        r, c = sub.row, sub.col
        rows = np.concatenate([r, r, r + npq, r + npq])
        cols = np.concatenate([c, c + npq, c, c + npq])
        order = sp.csc_matrix((np.arange(1, len(rows) + 1, dtype=float), (rows, cols)),
                              shape=(2 * npq, 2 * npq))
        perm = order.data.astype(int) - 1
        return pq[r], pq[c], sub.data, r == c, order.indices, order.indptr, perm


@dataclass(frozen=True)
class InjectionVector:
    """Net injected power per bus in pu; loads negative, generators positive."""
    p_pu: np.ndarray
    q_pu: np.ndarray

    @property
    def s(self) -> np.ndarray:
        return np.asarray(self.p_pu, float) + 1j * np.asarray(self.q_pu, float)


@dataclass(frozen=True)
class PowerFlowResult:
    vm_pu: np.ndarray
    va_rad: np.ndarray
    converged: bool
    iterations: int
    max_mismatch_pu: float

    @property
    def v(self) -> np.ndarray:
        return self.vm_pu * np.exp(1j * self.va_rad)


@dataclass(frozen=True)
class PFOptions:
    tol_pu: float = 1e-8
    max_iter: int = 30
    flat_start: bool = True
    # warm-start voltages, used when flat_start is False
    v0: np.ndarray | None = field(default=None, compare=False)
    # over-relaxation factor, Gauss-Seidel only
    accel: float = 1.0
    # Newton step: "dense" LU, "sparse" LU, or "auto" (sparse above 64 buses)
    linear_solver: str = "auto"


def build_ybus(grid: Grid) -> AdmittanceMatrix:
    n = grid.n_bus
    rows, cols, vals = [], [], []

    def stamp(i, j, yii, yjj, yij):
        rows.extend((i, j, i, j))
        cols.extend((i, j, j, i))
        vals.extend((yii, yjj, yij, yij))

    vn = np.array([b.vn_kv for b in grid.buses])
    z_base = vn ** 2 / grid.base_mva
    omega = 2 * np.pi * SYSTEM_FREQUENCY_HZ
    for k, ln in enumerate(grid.lines):
        zb = z_base[ln.from_bus]
        z = complex(ln.r_ohm_per_km, ln.x_ohm_per_km) * ln.length_km / zb
        if z == 0:
            raise ValueError(f"line{k} has zero series impedance")
        y = 1 / z
        b_half = 0.5j * omega * ln.c_nf_per_km * 1e-9 * ln.length_km * zb
        stamp(ln.from_bus, ln.to_bus, y + b_half, y + b_half, -y)
    for k, tr in enumerate(grid.transformers):
        vk, vkr = tr.vk_percent / 100, tr.vkr_percent / 100
        z = complex(vkr, np.sqrt(vk ** 2 - vkr ** 2)) * grid.base_mva / tr.sn_mva
        if z == 0:
            raise ValueError(f"trafo{k} has zero series impedance")
        y = 1 / z
        # off-nominal tap relative to the bus nominal voltages, on the hv side
        t = tr.ratio * vn[tr.lv_bus] / vn[tr.hv_bus]
        stamp(tr.hv_bus, tr.lv_bus, y / t ** 2, y, -y / t)
    ybus = sp.csr_matrix((np.array(vals, complex), (rows, cols)), shape=(n, n))
    ybus.sum_duplicates()
    return AdmittanceMatrix(ybus, grid.slack)


def injection_matrix(grid: Grid) -> np.ndarray:
    """(n_bus, n_attachment) map from attachment power in MW to net injection in pu."""
    m = np.zeros((grid.n_bus, len(grid.attachments)))
    for k, a in enumerate(grid.attachments):
        m[a.bus, k] = (1.0 if a.kind is AttachmentKind.SGEN else -1.0) / grid.base_mva
    return m


def assemble_injections(grid: Grid, p_mw, q_mvar, inc=None) -> InjectionVector:
    """Net bus injections from per-attachment P/Q (positive = consumed for loads,
    produced for generators)."""
    inc = injection_matrix(grid) if inc is None else inc
    return InjectionVector(inc @ np.asarray(p_mw, float), inc @ np.asarray(q_mvar, float))


def _start(n, slack, opts):
    if opts.flat_start or opts.v0 is None:
        return np.ones(n, complex)
    v = np.array(opts.v0, complex)
    v[slack] = 1.0
    return v


def _split(v):
    return np.abs(v), np.angle(v)


def _dense_step(Y, v, vm, i_bus, pq, mis):
    yv = Y * v[None, :]
    ds_dva = 1j * v[:, None] * np.conj(np.diag(i_bus) - yv)
    ds_dvm = v[:, None] * np.conj(yv / vm[None, :]) + np.diag(np.conj(i_bus) * v / vm)
    a = ds_dva[np.ix_(pq, pq)]
    m = ds_dvm[np.ix_(pq, pq)]
    npq = len(pq)
    jac = np.empty((2 * npq, 2 * npq))
    jac[:npq, :npq] = a.real
    jac[:npq, npq:] = m.real
    jac[npq:, :npq] = a.imag
    jac[npq:, npq:] = m.imag
    rhs = np.concatenate([mis[pq].real, mis[pq].imag])
    try:
        return np.linalg.solve(jac, -rhs)
    except np.linalg.LinAlgError:
        raise SingularJacobian("singular Jacobian") from None


def _sparse_step(y, v, vm, i_bus, mis):
    r, c, ydata, diag, indices, indptr, perm = y._jacobian_pattern
    yv = ydata * v[c]
    ds_dva = 1j * v[r] * np.conj(np.where(diag, i_bus[r], 0) - yv)
    ds_dvm = v[r] * np.conj(yv / vm[c]) + np.where(diag, np.conj(i_bus[r]) * v[r] / vm[r], 0)
    data = np.concatenate([ds_dva.real, ds_dvm.real, ds_dva.imag, ds_dvm.imag])[perm]
    npq = len(y.pq)
    jac = sp.csc_matrix((data, indices, indptr), shape=(2 * npq, 2 * npq))
    pq = y.pq
    rhs = np.concatenate([mis[pq].real, mis[pq].imag])
    try:
        return spl.splu(jac).solve(-rhs)
    except RuntimeError:
        raise SingularJacobian("singular Jacobian") from None


def nr_solve(y: AdmittanceMatrix, inj: InjectionVector, opts: PFOptions = PFOptions()) -> PowerFlowResult:
    """Newton-Raphson on the polar P/Q mismatch of every PQ bus.

    Converged when the largest complex power mismatch is at most ``tol_pu``.
    ``iterations`` counts mismatch evaluations, so a start that already
    balances reports 1.
    """
    if not opts.tol_pu > 0:
        raise ValueError("tol_pu must be positive")
    n = y.n
    pq = y.pq
    npq = len(pq)
    sparse = opts.linear_solver == "sparse" or (opts.linear_solver == "auto" and n > 64)
    Y = y.matrix if sparse else y.dense
    s_spec = inj.s
    v = _start(n, y.slack, opts)
    vm, va = _split(v)
    worst = np.inf
    for it in range(1, opts.max_iter + 2):
        i_bus = Y @ v
        mis = v * np.conj(i_bus) - s_spec
        worst = float(np.max(np.abs(mis[pq]))) if npq else 0.0
        if not np.isfinite(worst):
            break
        if worst <= opts.tol_pu:
            return PowerFlowResult(vm, va, True, it, worst)
        if it > opts.max_iter:
            break
        if sparse:
            dx = _sparse_step(y, v, vm, i_bus, mis)
        else:
            dx = _dense_step(Y, v, vm, i_bus, pq, mis)
        va = va.copy()
        vm = vm.copy()
        va[pq] += dx[:npq]
        vm[pq] += dx[npq:]
        v = vm * np.exp(1j * va)
    raise NonConvergence(min(it, opts.max_iter), worst)


def gs_solve(y: AdmittanceMatrix, inj: InjectionVector, opts: PFOptions = PFOptions(max_iter=100_000)) -> PowerFlowResult:
    """Gauss-Seidel with optional over-relaxation.

    One sweep updates buses in index order, each using the already-updated
    voltages of lower-index buses. That is a forward substitution with the
    lower triangle of Y, which is how it is evaluated here.
    """
    if not opts.tol_pu > 0:
        raise ValueError("tol_pu must be positive")
    Y = y.dense
    n = y.n
    s = y.slack
    pq = np.array([i for i in range(n) if i != s], dtype=int)
    s_spec = inj.s
    v = _start(n, s, opts)
    if len(pq) == 0:
        return PowerFlowResult(*_split(v), True, 1, 0.0)
    w = opts.accel
    ypp = Y[np.ix_(pq, pq)]
    d = np.diag(np.diag(ypp))
    lower = np.tril(ypp, -1)
    upper = np.triu(ypp, 1)
    lhs = d + w * lower
    rhs_const = -Y[pq, s] * v[s]
    old_part = w * upper + (w - 1) * d
    conj_s = np.conj(s_spec[pq])
    worst = np.inf
    for it in range(1, opts.max_iter + 2):
        mis = v * np.conj(Y @ v) - s_spec
        worst = float(np.max(np.abs(mis[pq])))
        if not np.isfinite(worst):
            break
        if worst <= opts.tol_pu:
            return PowerFlowResult(*_split(v), True, it, worst)
        if it > opts.max_iter:
            break
        vp = v[pq]
        b = w * (conj_s / np.conj(vp) + rhs_const) - old_part @ vp
        v = v.copy()
        v[pq] = scipy.linalg.solve_triangular(lhs, b, lower=True, check_finite=False)
    raise NonConvergence(min(it, opts.max_iter), worst)


def check_power_balance(y: AdmittanceMatrix, inj: InjectionVector, result: PowerFlowResult) -> float:
    v = result.v
    mis = inj.s - v * np.conj(y.dense @ v)
    mask = np.ones(y.n, bool)
    mask[y.slack] = False
    return float(np.max(np.abs(mis[mask]))) if mask.any() else 0.0
