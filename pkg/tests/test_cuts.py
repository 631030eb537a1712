import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acots.cuts import (Cut, CutPool, arctan_envelopes, build_disjunction, cycle_bilinearize, fix_binaries,
                        mccormick, mccormick_interval, neighborhood, separate, separate_cut, tighten_all,
                        tighten_bounds)
from acots.cuts.envelopes import plane_error
from acots.formulation import CsBounds, build_misocp_ots
from acots.netmodel import Cycle, Line, cycle_basis
from cut_sampling import hull_sample, s0_point, s1_point, violating_point
from helpers import gen, make_network


# -- arctangent envelopes ---------------------------------------------------------

def test_degenerate_box_gives_flat_planes():
    env = arctan_envelopes(1.0, 1.0, 0.0, 0.0)
    assert env is not None
    for g, a, b in env.upper + env.lower:
        assert g + a * 1.0 + b * 0.0 == pytest.approx(0.0, abs=1e-12)
    assert all(d == 0.0 for d in env.shifts)


def test_nonpositive_c_lower_bound_skips_envelope():
    assert arctan_envelopes(0.0, 1.0, -0.1, 0.1) is None
    assert arctan_envelopes(-0.5, 1.0, -0.1, 0.1) is None


def _grid_extreme(plane, box, sense, n=400):
    c = np.linspace(box[0], box[1], n)
    s = np.linspace(box[2], box[3], n)
    C, S = np.meshgrid(c, s)
    g, a, b = plane
    diff = np.arctan(S / C) - (g + a * C + b * S)
    return diff.max() if sense == "max" else diff.min()


def test_shift_matches_dense_grid():
    box = (0.9, 1.1, -0.2, 0.2)
    c_lo, c_hi, s_lo, s_hi = box
    env = arctan_envelopes(*box)
    z = {1: (c_lo, s_hi), 2: (c_hi, s_hi), 3: (c_hi, s_lo), 4: (c_lo, s_lo)}
    for k, (tri, (g, a, b)) in enumerate(zip(((1, 2, 3), (1, 3, 4)), env.upper)):
        # before the shift the plane interpolates arctan at the three corners
        g0 = g - env.shifts[k]
        for p in tri:
            c, s = z[p]
            assert g0 + a * c + b * s == pytest.approx(math.atan(s / c), abs=1e-12)
            # after the shift it exceeds arctan by exactly the shift
            assert g + a * c + b * s - math.atan(s / c) == pytest.approx(env.shifts[k], abs=1e-12)
        assert env.shifts[k] >= 0
        assert env.shifts[k] == pytest.approx(_grid_extreme((g0, a, b), box, "max"), abs=1e-6)
    for k, (g, a, b) in enumerate(env.lower):
        g0 = g - env.shifts[2 + k]
        assert env.shifts[2 + k] <= 0
        assert env.shifts[2 + k] == pytest.approx(_grid_extreme((g0, a, b), box, "min"), abs=1e-6)


def test_corner_values_define_the_planes():
    env = arctan_envelopes(0.9, 1.1, -0.2, 0.2)
    expected = {(0.9, 0.2): math.atan(0.2 / 0.9), (1.1, 0.2): math.atan(0.2 / 1.1),
                (1.1, -0.2): math.atan(-0.2 / 1.1), (0.9, -0.2): math.atan(-0.2 / 0.9)}
    for (c, s), th in expected.items():
        assert env.upper_value(c, s) >= th - 1e-12
        assert env.lower_value(c, s) <= th + 1e-12


boxes = st.tuples(st.floats(0.05, 1.2), st.floats(0.0, 0.5), st.floats(-1.2, 1.2), st.floats(0.0, 0.8)).map(
    lambda t: (t[0], t[0] + t[1], t[2], t[2] + t[3]))


@settings(max_examples=60, deadline=None)
@given(boxes, st.integers(0, 2**31))
def test_envelopes_bracket_arctan_on_samples(box, seed):
    env = arctan_envelopes(*box)
    rng = np.random.default_rng(seed)
    c = rng.uniform(box[0], box[1], 2000)
    s = rng.uniform(box[2], box[3], 2000)
    th = np.arctan(s / c)
    assert np.all(env.upper_value(c, s) >= th - 1e-9)
    assert np.all(env.lower_value(c, s) <= th + 1e-9)
    assert env.rows_hold(c, s, th, np.ones_like(c))
    # switched off: c = s = 0 and any angle within the slack
    for g, _, _ in env.upper:
        lim = 2 * math.pi - abs(g) - 1e-9
        assert env.rows_hold(0.0, 0.0, rng.uniform(-lim, lim), 0.0) or abs(g) > math.pi


def test_kkt_enumeration_is_exact_against_grid():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c_lo = rng.uniform(0.1, 1.0)
        box = (c_lo, c_lo + rng.uniform(0.01, 0.5), -rng.uniform(0, 0.6), rng.uniform(0, 0.6))
        a, b = rng.normal(size=2)
        g = rng.normal()
        assert plane_error(g, a, b, box, "max") >= _grid_extreme((g, a, b), box, "max", 300) - 1e-12
        assert plane_error(g, a, b, box, "min") <= _grid_extreme((g, a, b), box, "min", 300) + 1e-12


# -- McCormick --------------------------------------------------------------------

def test_mccormick_is_tight_at_corners():
    rows = mccormick(0, 2, 1, 3)
    for a in (0, 2):
        for b in (1, 3):
            lo, hi = mccormick_interval(rows, a, b)
            assert lo == pytest.approx(a * b) and hi == pytest.approx(a * b)


def test_mccormick_interval_at_center():
    lo, hi = mccormick_interval(mccormick(0, 1, 0, 1), 0.5, 0.5)
    assert (lo, hi) == pytest.approx((0.0, 0.5))


def test_mccormick_fixed_factor_is_exact():
    rows = mccormick(0.7, 0.7, -1, 2)
    for b in np.linspace(-1, 2, 7):
        lo, hi = mccormick_interval(rows, 0.7, b)
        assert lo == pytest.approx(0.7 * b) and hi == pytest.approx(0.7 * b)
    with pytest.raises(ValueError):
        mccormick(0, math.inf, 0, 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 3), st.floats(-3, 3), st.floats(0, 3), st.floats(0, 1), st.floats(0, 1))
def test_mccormick_contains_the_product(alo, da, blo, db, u, v):
    a, b = alo + u * da, blo + v * db
    lo, hi = mccormick_interval(mccormick(alo, alo + da, blo, blo + db), a, b)
    assert lo - 1e-9 <= a * b <= hi + 1e-9


# -- cycle bilinearization --------------------------------------------------------

def ring(n, vmax=1.1):
    buses = [(k, 0.0, 0.0, 0.9, vmax) for k in range(1, n + 1)]
    lines = [Line(k, k % n + 1, 0.01, 0.1) for k in range(1, n + 1)]
    return make_network(buses, [gen(1)], lines)


def test_short_cycles_are_rejected():
    net = make_network([(1, 0, 0), (2, 0, 0)], [gen(1)], [Line(1, 2, 0, 0.1), Line(1, 2, 0, 0.2)])
    (cyc,) = cycle_basis(net)
    with pytest.raises(ValueError):
        cycle_bilinearize(net, cyc)


def test_four_cycle_uses_one_chord():
    net = ring(4)
    (cyc,) = cycle_basis(net)
    system = cycle_bilinearize(net, cyc)
    a = cyc.buses[0]
    assert len(system.chords) == 1 and system.chords[0] == (a, cyc.buses[2])
    assert system.chord_bounds == [pytest.approx(1.21)]
    assert len(system.triangles) == 2
    assert all(len(eq) == 3 for eq in system.equations)


def _symbol_values(net, cyc, system, e, f):
    ends = net.line_ends
    vals = {}
    for l in cyc.lines:
        i, j = ends[l]
        vals[("c", l)] = e[i] * e[j] + f[i] * f[j]
        vals[("s", l)] = e[i] * f[j] - e[j] * f[i]
    for b in range(net.n_bus):
        vals[("cii", b)] = e[b] ** 2 + f[b] ** 2
    for t, (i, j) in enumerate(system.chords):
        vals[("ct", t)] = e[i] * e[j] + f[i] * f[j]
        vals[("st", t)] = e[i] * f[j] - e[j] * f[i]
    return vals


@pytest.mark.parametrize("n", [3, 4, 5, 7])
def test_bilinear_residuals_vanish_on_the_circle(n):
    net = ring(n)
    (cyc,) = cycle_basis(net)
    system = cycle_bilinearize(net, cyc)
    rng = np.random.default_rng(n)
    worst = 0.0
    for _ in range(1000):
        theta = rng.uniform(-np.pi, np.pi, n)
        e, f = np.cos(theta), np.sin(theta)
        worst = max(worst, np.abs(system.residuals(_symbol_values(net, cyc, system, e, f))).max())
    assert worst <= 1e-12
    # and with non-unit magnitudes
    mag = rng.uniform(0.9, 1.1, n)
    theta = rng.uniform(-np.pi, np.pi, n)
    vals = _symbol_values(net, cyc, system, mag * np.cos(theta), mag * np.sin(theta))
    assert np.abs(system.residuals(vals)).max() <= 1e-12


def test_bilinear_residuals_on_local_opf_solution(case6ww):
    from helpers import local
    res = local(case6ww)
    for cyc in cycle_basis(case6ww):
        system = cycle_bilinearize(case6ww, cyc)
        vals = _symbol_values(case6ww, cyc, system, res.point.e, res.point.f)
        assert np.abs(system.residuals(vals)).max() <= 1e-6


def test_bilinear_residuals_detect_inconsistent_angles():
    net = ring(3)
    (cyc,) = cycle_basis(net)
    system = cycle_bilinearize(net, cyc)
    vals = _symbol_values(net, cyc, system, np.ones(3), np.zeros(3))
    l = cyc.lines[0]
    vals[("c", l)], vals[("s", l)] = math.cos(0.3), -math.sin(0.3)
    assert np.abs(system.residuals(vals)).max() > 1e-3


# -- disjunctions and separation ------------------------------------------------------

def test_three_cycle_disjunction_dimensions(case6ww):
    cyc = next(c for c in cycle_basis(case6ww) if len(c) == 3)
    disj = build_disjunction(case6ww, cyc, CsBounds.default(case6ww))
    assert disj.extras["W_dim"] == 6
    prog = disj.on_model.build()
    assert prog.psd[0].dim == 6
    assert disj.n_point == 3 * 3 + 3 + 2 * 3


def test_membership_of_constructed_points(case6ww):
    b = CsBounds.default(case6ww)
    cyc = cycle_basis(case6ww)[0]
    disj = build_disjunction(case6ww, cyc, b)
    rng = np.random.default_rng(0)
    for _ in range(3):
        assert disj.contains(s1_point(case6ww, disj, b, rng), "on")
        assert disj.contains(s0_point(case6ww, disj, b, rng), "off")
    assert not disj.contains(violating_point(case6ww, disj, b, rng), "on")


@pytest.mark.parametrize("kind", ["combined", "sdp", "mccormick"])
def test_members_are_never_cut(case6ww, kind):
    b = CsBounds.default(case6ww)
    cyc = cycle_basis(case6ww)[1]
    disj = build_disjunction(case6ww, cyc, b, kind=kind)
    rng = np.random.default_rng(1)
    for k in range(15):
        pt = s1_point(case6ww, disj, b, rng) if k % 2 else s0_point(case6ww, disj, b, rng)
        assert separate(pt, disj) is None


def test_four_cycle_members_are_never_cut():
    net = ring(4)
    (cyc,) = cycle_basis(net)
    b = CsBounds.default(net)
    disj = build_disjunction(net, cyc, b)
    rng = np.random.default_rng(2)
    for k in range(10):
        pt = s1_point(net, disj, b, rng) if k % 2 else s0_point(net, disj, b, rng)
        assert separate(pt, disj) is None


def test_violating_points_give_valid_normalized_cuts(case6ww):
    b = CsBounds.default(case6ww)
    rng = np.random.default_rng(4)
    for ci, cyc in enumerate(cycle_basis(case6ww)[:2]):
        disj = build_disjunction(case6ww, cyc, b, cycle_id=ci)
        res = separate(violating_point(case6ww, disj, b, rng), disj)
        assert res is not None
        alpha, beta, viol = res
        assert viol > 1e-7
        assert np.abs(alpha).max() <= 1 + 1e-12 and abs(beta) <= 1 + 1e-12
        samples = np.array([hull_sample(case6ww, disj, b, rng) for _ in range(300)])
        assert (samples @ alpha - beta).min() >= -1e-6


def test_separate_rejects_bad_points(case6ww):
    disj = build_disjunction(case6ww, cycle_basis(case6ww)[0], CsBounds.default(case6ww))
    with pytest.raises(ValueError):
        separate(np.zeros(3), disj)
    with pytest.raises(ValueError):
        build_disjunction(case6ww, cycle_basis(case6ww)[0], CsBounds.default(case6ww), kind="other")


def test_separated_cut_maps_to_program_variables(case6ww):
    b = CsBounds.default(case6ww)
    mi = build_misocp_ots(case6ww, b)
    disj = build_disjunction(case6ww, cycle_basis(case6ww)[0], b, cycle_id=0)
    rng = np.random.default_rng(5)
    pt = violating_point(case6ww, disj, b, rng)
    cut = separate_cut(pt, disj, mi.vmap, iteration=1)
    assert cut is not None and cut.cycle == 0 and cut.iteration == 1
    z = np.zeros(mi.program.n)
    z[disj.program_indices(mi.vmap)] = pt
    assert cut.slack(z) == pytest.approx(-cut.violation, abs=1e-9)


def test_cut_pool_dedup_and_json():
    pool = CutPool()
    c1 = Cut([0, 3], [0.5, -1.0], 0.25, cycle=2, iteration=1, violation=0.1)
    assert pool.add(c1)
    assert not pool.add(Cut([3, 0], [-1.0, 0.5 + 1e-12], 0.25))
    assert pool.add(Cut([1], [1.0], 0.0))
    again = CutPool.from_json(pool.to_json())
    assert [c.key() for c in again.cuts] == [c.key() for c in pool.cuts]
    G, h = pool.rows(5)
    z = np.array([1.0, 0.2, 0, 0.1, 0])
    np.testing.assert_allclose(h - G @ z, [c.slack(z) for c in pool.cuts])
    with pytest.raises(ValueError):
        CutPool.from_json('{"format": "x"}')


# -- bound tightening and binary fixing ---------------------------------------------------

def test_zero_load_two_bus_recovers_flat_solution():
    net = make_network([(1, 0, 0, 1.0, 1.0), (2, 0, 0, 1.0, 1.0)], [], [Line(1, 2, 0.0, 0.1)])
    r = tighten_bounds(net, CsBounds.default(net), 0, r=1)
    assert not r.infeasible
    assert r.c_lo == pytest.approx(1.0, abs=1e-6) and r.c_hi == pytest.approx(1.0, abs=1e-6)
    assert r.s_lo == pytest.approx(0.0, abs=1e-6) and r.s_hi == pytest.approx(0.0, abs=1e-6)


def test_case6ww_line_12_regression(case6ww):
    l = case6ww.find_line(1, 2)
    r = tighten_bounds(case6ww, CsBounds.default(case6ww), l, r=2)
    lim = 1.05 * 1.05
    assert -lim < r.c_lo and r.c_hi <= lim and (r.c_lo, r.c_hi) != (-lim, lim)
    assert -lim < r.s_lo < r.s_hi < lim
    assert r.c_lo == pytest.approx(1.0086744, abs=1e-5)
    assert r.c_hi == pytest.approx(1.1025, abs=1e-7)
    assert r.s_lo == pytest.approx(-0.0872378, abs=1e-5)
    assert r.s_hi == pytest.approx(0.0872378, abs=1e-5)


def test_covering_radius_is_at_least_as_tight_as_defaults(case6ww):
    b = CsBounds.default(case6ww)
    balance, lines, _ = neighborhood(case6ww, 0, 6)
    assert len(balance) == case6ww.n_bus and len(lines) == case6ww.n_line
    for l in range(3):
        r = tighten_bounds(case6ww, b, l, r=6)
        assert b.c_lo[l] <= r.c_lo <= r.c_hi <= b.c_hi[l]
        assert b.s_lo[l] <= r.s_lo <= r.s_hi <= b.s_hi[l]
    with pytest.raises(ValueError):
        neighborhood(case6ww, 0, -1)


def test_tightening_never_widens(case6ww):
    first = tighten_all(case6ww)
    second = tighten_all(case6ww, first.bounds)
    for name in ("c_lo", "s_lo"):
        assert np.all(getattr(second.bounds, name) >= getattr(first.bounds, name))
    for name in ("c_hi", "s_hi"):
        assert np.all(getattr(second.bounds, name) <= getattr(first.bounds, name))
    d = CsBounds.default(case6ww)
    assert np.all(first.bounds.c_lo >= d.c_lo) and np.all(first.bounds.c_hi <= d.c_hi)


def test_tightened_boxes_contain_local_solutions(case6ww):
    from helpers import local
    rep = tighten_all(case6ww)
    for x in (np.ones(case6ww.n_line),):
        res = local(case6ww, x)
        _, c, s = res.point.cs(case6ww)
        b = rep.bounds
        assert np.all(c >= b.c_lo - 1e-6) and np.all(c <= b.c_hi + 1e-6)
        assert np.all(s >= b.s_lo - 1e-6) and np.all(s <= b.s_hi + 1e-6)


def test_tighten_all_is_independent_of_worker_count(case6ww):
    a = tighten_all(case6ww, workers=1)
    b = tighten_all(case6ww, workers=3)
    assert a.bounds.to_dict() == b.bounds.to_dict()
    assert a.fixed == b.fixed


def test_radial_feeder_line_is_fixed_on():
    net = make_network([(1, 0, 0), (2, 0.5, 0.1), (3, 0.3, 0.1)], [gen(1)],
                       [Line(1, 2, 0.01, 0.1), Line(2, 3, 0.01, 0.1)])
    b = CsBounds.default(net)
    assert fix_binaries(net, b, 0) and fix_binaries(net, b, 1)


def test_parallel_line_is_not_fixed():
    net = make_network([(1, 0, 0), (2, 0.5, 0.1)], [gen(1)], [Line(1, 2, 0.01, 0.1), Line(1, 2, 0.01, 0.1)])
    b = CsBounds.default(net)
    assert not fix_binaries(net, b, 0) and not fix_binaries(net, b, 1)


def test_zero_load_lines_are_not_fixed():
    net = make_network([(1, 0, 0), (2, 0, 0), (3, 0, 0)], [gen(1)],
                       [Line(1, 2, 0.01, 0.1), Line(2, 3, 0.01, 0.1), Line(1, 3, 0.01, 0.1)])
    b = CsBounds.default(net)
    assert not any(fix_binaries(net, b, l) for l in range(3))
