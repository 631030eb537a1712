import json
import math

import numpy as np
import pytest

from acots.acopf import (FEASIBILITY_TOL, best_line_heuristic, solution_to_dict, solution_to_json, solve_local,
                         topology_connected)
from acots.conic import solve
from acots.formulation import build_misocp_ots, check_ac_feasibility, fix_topology
from acots.netmodel import Line
from helpers import feasible_topologies, gen, local, make_network


def test_zero_load_network_stays_flat():
    net = make_network([(1, 0, 0), (2, 0, 0), (3, 0, 0)], [gen(1, cost=5.0), gen(3, cost=2.0)],
                       [Line(1, 2, 0.01, 0.1), Line(2, 3, 0.02, 0.1), Line(1, 3, 0.01, 0.2)])
    for x in ([1, 1, 1], [1, 0, 1], [0, 1, 1]):
        res = solve_local(net, x)
        assert res.feasible
        assert res.objective == pytest.approx(0.0, abs=1e-6)
        v = res.point.e + 1j * res.point.f
        assert np.ptp(np.abs(v)) <= 1e-5 and np.ptp(np.angle(v)) <= 1e-5
        np.testing.assert_allclose(res.point.pg, 0.0, atol=1e-6)


def test_case6ww_baseline(case6ww):
    res = local(case6ww)
    assert res.feasible
    assert res.objective == pytest.approx(273.76, rel=5e-3)
    assert check_ac_feasibility(case6ww, res.point, FEASIBILITY_TOL).feasible


def test_case6ww_without_line_12(case6ww):
    x = np.ones(case6ww.n_line)
    x[case6ww.find_line(1, 2)] = 0
    res = local(case6ww, x)
    assert res.feasible
    assert res.objective == pytest.approx(252.57, rel=5e-3)
    np.testing.assert_allclose(res.point.pg[:2] * 100, [85.56, 84.25], atol=0.5)
    np.testing.assert_allclose(res.point.qg[:2] * 100, [32.74, 63.26], atol=0.5)


def test_best_line_on_case6ww(case6ww):
    x, obj, table = best_line_heuristic(case6ww)
    assert np.where(x < 0.5)[0].tolist() == [case6ww.find_line(1, 2)]
    assert obj == pytest.approx(252.57, rel=5e-3)
    assert obj == min(table.values())
    assert len(table) == case6ww.n_line + 1


def test_best_line_on_radial_network_keeps_everything():
    net = make_network([(1, 0, 0), (2, 0.4, 0.1), (3, 0.3, 0.1)], [gen(1)],
                       [Line(1, 2, 0.01, 0.1), Line(2, 3, 0.01, 0.1)])
    x, obj, table = best_line_heuristic(net)
    assert x.tolist() == [1.0, 1.0]
    assert list(table) == [None]
    assert obj == pytest.approx(solve_local(net).objective, rel=1e-9)


def test_best_line_matches_single_removal_enumeration():
    # cheap generator at bus 1 behind a lossy detour; removing the lossy line helps
    net = make_network([(1, 0, 0), (2, 0, 0), (3, 0.9, 0.2)], [gen(1, cost=10.0), gen(2, cost=30.0)],
                       [Line(1, 2, 0.02, 0.2), Line(1, 3, 0.02, 0.2), Line(2, 3, 0.3, 0.3)], name="lossy3")
    x, obj, table = best_line_heuristic(net)
    brute = {None: solve_local(net).objective}
    for l in range(net.n_line):
        xx = np.ones(net.n_line)
        xx[l] = 0
        r = solve_local(net, xx)
        brute[l] = r.objective if r.feasible else math.inf
    for k in brute:
        assert table[k] == pytest.approx(brute[k], rel=1e-6)
    best = min(brute, key=lambda k: (brute[k], -1 if k is None else k))
    assert obj == pytest.approx(brute[best], rel=1e-6)
    expect = np.ones(net.n_line)
    if best is not None:
        expect[best] = 0
    np.testing.assert_array_equal(x, expect)


@pytest.mark.parametrize("name", ["toy3", "case6ww", "case9", "case14"])
def test_feasible_results_pass_the_independent_check(name, request):
    net = request.getfixturevalue(name)
    mi = build_misocp_ots(net)
    for x in [np.ones(net.n_line)] + feasible_topologies(net, 3, seed=1):
        res = local(net, x)
        assert res.feasible
        assert check_ac_feasibility(net, res.point, FEASIBILITY_TOL).feasible
        assert res.max_residual <= FEASIBILITY_TOL
        lb = solve(fix_topology(mi, x))
        assert lb.optimal
        assert lb.objective <= res.objective * (1 + 1e-6)


def test_deterministic_under_fixed_warm_start(case9):
    warm = local(case9).point
    a = solve_local(case9, warm=warm)
    b = solve_local(case9, warm=warm)
    assert a.objective == b.objective and a.iterations == b.iterations
    np.testing.assert_array_equal(a.point.e, b.point.e)


def test_islands():
    net = make_network([(1, 0, 0), (2, 0.5, 0.1), (3, 0, 0)], [gen(1)],
                       [Line(1, 2, 0.01, 0.1), Line(2, 3, 0.01, 0.1)])
    # bus 3 has nothing attached: dropping its line only prunes it
    assert topology_connected(net, [1, 0])
    res = solve_local(net, [1, 0])
    assert res.feasible
    assert res.point.pg[0] >= 0.5
    # separating the load from the generator fails without solving
    assert not topology_connected(net, [0, 1])
    res = solve_local(net, [0, 1])
    assert not res.feasible and "islands" in res.message and res.objective == math.inf
    nogen = make_network([(1, 0.2, 0), (2, 0, 0)], [], [Line(1, 2, 0.01, 0.1)])
    res = solve_local(nogen)
    assert not res.feasible and "no generation" in res.message


def test_solution_export(case6ww):
    res = local(case6ww)
    d = json.loads(solution_to_json(case6ww, res))
    assert d["status"] == "feasible"
    assert len(d["buses"]) == 6 and len(d["generators"]) == 3 and len(d["lines"]) == 11
    vm = [b["vm"] for b in d["buses"]]
    assert all(0.9 <= v <= 1.1 for v in vm)
    assert sum(g["pg"] for g in d["generators"]) * 100 >= 210
    failed = solve_local(case6ww, np.zeros(case6ww.n_line))
    assert solution_to_dict(case6ww, failed)["status"] == "failed"
