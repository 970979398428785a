import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvsurrogate.grid_model import Bus, BusKind, Grid, Line, Transformer
from lvsurrogate.power_flow import (InjectionVector, NonConvergence, PFOptions, assemble_injections,
                                    build_ybus, check_power_balance, gs_solve, injection_matrix,
                                    nr_solve)

Z = 0.01 + 0.02j


def two_bus(c_nf=0.0):
    # 1 kV, 1 MVA base: 1 ohm = 1 pu
    buses = (Bus(0, "s", BusKind.SLACK, 1.0), Bus(1, "l", BusKind.PQ, 1.0))
    return Grid(1.0, buses, (Line(0, 1, Z.real, Z.imag, c_nf, 1.0),))


def load(p, q, n=2):
    s = np.zeros(n, complex)
    s[1] = -(p + 1j * q)
    return InjectionVector(s.real, s.imag)


def fixed_point_v2(s_load, tol=1e-12):
    v = 1.0 + 0j
    for _ in range(10_000):
        new = 1.0 - Z * np.conj(s_load / v)
        if abs(new - v) < tol:
            return new
        v = new
    raise AssertionError("oracle did not converge")


def random_injections(grid, rng, level):
    """Loads and generators at a random fraction of their peak."""
    n = len(grid.attachments)
    peak = np.array([a.scaling for a in grid.attachments])
    p = peak * rng.uniform(0, level, n)
    q = p * rng.uniform(-0.3, 0.5, n)
    return assemble_injections(grid, p, q)


def test_single_line_ybus_by_hand():
    y = build_ybus(two_bus()).dense
    assert np.allclose(y, [[20 - 40j, -20 + 40j], [-20 + 40j, 20 - 40j]], atol=1e-12)


def test_slack_only_grid():
    g = Grid(1.0, (Bus(0, "s", BusKind.SLACK, 0.4),))
    y = build_ybus(g)
    assert y.dense.shape == (1, 1) and y.dense[0, 0] == 0
    res = nr_solve(y, InjectionVector(np.zeros(1), np.zeros(1)))
    assert res.vm_pu.tolist() == [1.0]


def test_line_charging_row_sums():
    g = two_bus(c_nf=300.0)
    y = build_ybus(g).dense
    b_half = 2 * np.pi * 50 * 300e-9 / 2
    assert np.allclose(y.sum(axis=1), [1j * b_half] * 2, atol=1e-15)


def test_zero_impedance_rejected():
    g = Grid(1.0, two_bus().buses, (Line(0, 1, 0.0, 0.0, 0.0, 1.0),))
    with pytest.raises(ValueError, match="zero series impedance"):
        build_ybus(g)


def test_transformer_stamp():
    buses = (Bus(0, "hv", BusKind.SLACK, 20.0), Bus(1, "lv", BusKind.PQ, 0.4))
    tr = Transformer(0, 1, 0.5, 4.0, 1.0, 52.5)
    y = build_ybus(Grid(1.0, buses, transformers=(tr,))).dense
    z = (0.01 + 1j * np.sqrt(0.04 ** 2 - 0.01 ** 2)) / 0.5
    t = 52.5 * 0.4 / 20.0
    assert np.allclose(y, [[1 / z / t ** 2, -1 / z / t], [-1 / z / t, 1 / z]], atol=1e-12)
    assert not np.allclose(y, y.T.conj())


def test_line_only_fixture_ybus_symmetric(cigre):
    y = build_ybus(cigre).dense
    # transformers are on nominal ratio here, so the whole matrix is symmetric
    assert np.allclose(y, y.T, atol=1e-12)


def test_flat_no_load_is_exact(cigre):
    lines = tuple(dataclasses.replace(ln, c_nf_per_km=0.0) for ln in cigre.lines)
    y = build_ybus(Grid(cigre.base_mva, cigre.buses, lines, cigre.transformers))
    zero = InjectionVector(np.zeros(y.n), np.zeros(y.n))
    for solve in (nr_solve, gs_solve):
        res = solve(y, zero)
        assert res.converged and res.iterations == 1
        assert np.abs(res.vm_pu - 1.0).max() <= 1e-10
        assert np.abs(res.va_rad).max() <= 1e-10
        assert check_power_balance(y, zero, res) <= 1e-10


def test_two_bus_matches_fixed_point():
    y = build_ybus(two_bus())
    res = nr_solve(y, load(0.1, 0.05))
    v2 = fixed_point_v2(0.1 + 0.05j)
    assert abs(res.vm_pu[1] - abs(v2)) <= 1e-10
    assert abs(res.va_rad[1] - np.angle(v2)) <= 1e-10
    assert res.vm_pu[1] == pytest.approx(0.99800, abs=1e-5)
    gs = gs_solve(y, load(0.1, 0.05))
    assert abs(gs.vm_pu[1] - res.vm_pu[1]) <= 1e-8


def test_infeasible_load_raises():
    with pytest.raises(NonConvergence) as err:
        nr_solve(build_ybus(two_bus()), load(60.0, 0.0))
    assert err.value.iterations == 30
    assert err.value.last_mismatch > 1e-8


def test_slack_values_and_balance(cigre, rng):
    y = build_ybus(cigre)
    inj = random_injections(cigre, rng, 1.0)
    res = nr_solve(y, inj)
    assert res.vm_pu[cigre.slack] == 1.0 and res.va_rad[cigre.slack] == 0.0
    assert res.max_mismatch_pu <= 1e-8
    assert check_power_balance(y, inj, res) <= 1e-8


def test_perturbed_voltage_breaks_balance(cigre, rng):
    y = build_ybus(cigre)
    inj = random_injections(cigre, rng, 1.0)
    res = nr_solve(y, inj)
    vm = res.vm_pu.copy()
    vm[5] += 0.01
    bad = type(res)(vm, res.va_rad, True, res.iterations, res.max_mismatch_pu)
    assert check_power_balance(y, inj, bad) > 1e-8


@pytest.mark.parametrize("solver", ["dense", "sparse"])
def test_linear_solvers_agree(rural, rng, solver):
    y = build_ybus(rural)
    inj = random_injections(rural, rng, 1.0)
    ref = nr_solve(y, inj, PFOptions(linear_solver="dense"))
    res = nr_solve(y, inj, PFOptions(linear_solver=solver))
    assert np.abs(res.vm_pu - ref.vm_pu).max() <= 1e-12
    assert res.iterations == ref.iterations


def test_warm_start_converges_faster(cigre, rng):
    y = build_ybus(cigre)
    inj = random_injections(cigre, rng, 1.0)
    flat = nr_solve(y, inj)
    warm = nr_solve(y, inj, PFOptions(flat_start=False, v0=flat.v))
    assert warm.iterations < flat.iterations
    assert np.abs(warm.vm_pu - flat.vm_pu).max() <= 1e-8


def test_injection_signs(rural):
    m = injection_matrix(rural)
    kinds = [a.kind.value for a in rural.attachments]
    col = m.sum(axis=0)
    assert all((c < 0) == (k == "Load") for c, k in zip(col, kinds))


@pytest.mark.parametrize("seed", range(10))
def test_nr_matches_gs_on_fixture(cigre, seed):
    y = build_ybus(cigre)
    inj = random_injections(cigre, np.random.default_rng(seed), 1.0)
    nr = nr_solve(y, inj, PFOptions(tol_pu=1e-11))
    gs = gs_solve(y, inj, PFOptions(tol_pu=1e-11, max_iter=100_000))
    assert np.abs(nr.vm_pu - gs.vm_pu).max() <= 1e-8
    assert np.abs(nr.va_rad - gs.va_rad).max() <= 1e-8


@given(st.lists(st.integers(0, 160), min_size=2, max_size=8, unique=True))
def test_more_load_lower_voltage(steps):
    y = build_ybus(two_bus())
    vms = []
    for p in 0.05 * np.sort(steps):
        try:
            vms.append(nr_solve(y, load(p, 0.5 * p)).vm_pu[1])
        except NonConvergence:
            break
    assert all(b < a for a, b in zip(vms, vms[1:]))


@given(st.floats(0.0, 2.0), st.floats(-1.0, 1.0))
def test_two_bus_property(p, q):
    y = build_ybus(two_bus())
    res = nr_solve(y, load(p, q))
    v2 = fixed_point_v2(p + 1j * q)
    assert abs(res.v[1] - v2) <= 1e-9
