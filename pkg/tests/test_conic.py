import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from acots.conic import (ConicProgram, SolverOptions, Status, farkas_residual, program_from_json,
                         program_to_json, psd_outer_loop, solve)
from acots.conic import reference
from acots.modeling import Model
from helpers import random_psd_program, reference_programs, schur_toy, soc_toy

needs_reference = pytest.mark.skipif(not reference.available(), reason="clarabel not installed")


def lp(c, G, h, lb=None, ub=None, A=None, b=None):
    n = len(c)
    G = sp.csr_matrix(np.atleast_2d(np.asarray(G, float)))
    A = sp.csr_matrix((0, n)) if A is None else sp.csr_matrix(np.atleast_2d(np.asarray(A, float)))
    return ConicProgram(np.asarray(c, float), A, np.zeros(A.shape[0]) if b is None else np.asarray(b, float),
                        G, np.asarray(h, float), G.shape[0], [],
                        np.full(n, -np.inf) if lb is None else np.asarray(lb, float),
                        np.full(n, np.inf) if ub is None else np.asarray(ub, float))


def test_soc_toy_reaches_sqrt5():
    sol = solve(soc_toy())
    assert sol.optimal
    assert abs(sol.x[0] - math.sqrt(5)) <= 1e-8


def test_schur_complement_gives_four():
    sol = solve(schur_toy())
    assert sol.optimal and abs(sol.x[0] - 4) <= 1e-6
    out = psd_outer_loop(schur_toy(), SolverOptions())
    assert out.optimal and abs(out.x[0] - 4) <= 1e-6


def test_outer_loop_stops_at_once_when_psd_is_implied():
    # diagonal 2x2 block: the initial diagonal rows already describe it
    m = Model()
    a = m.add_var("a", 1.0, 2.0)
    b = m.add_var("b", 3.0, 4.0)
    m.psd([[a, 0.0], [0.0, b]])
    m.minimize(a + b)
    sol = psd_outer_loop(m.build(), SolverOptions())
    assert sol.optimal and sol.psd_rounds == 1
    assert sol.objective == pytest.approx(4.0, abs=1e-7)


def test_outer_loop_random_psd_feasibility_instances():
    for seed in range(100):
        prog = random_psd_program(seed, objective=False)
        sol = psd_outer_loop(prog, SolverOptions())
        assert sol.optimal, seed
        assert np.linalg.eigvalsh(prog.psd[0].value(sol.x))[0] >= -1e-7, seed


@pytest.mark.parametrize("seed", range(3))
def test_outer_loop_matches_native_barrier(seed):
    prog = random_psd_program(seed)
    sol = psd_outer_loop(prog, SolverOptions())
    assert sol.optimal
    assert np.linalg.eigvalsh(prog.psd[0].value(sol.x))[0] >= -1e-7
    native = solve(prog)
    assert native.optimal
    assert sol.objective == pytest.approx(native.objective, abs=1e-5 * max(1, abs(native.objective)))


def test_lp_duals_and_weak_duality():
    # min x + 2y s.t. x + y >= 1, x, y >= 0
    p = lp([1, 2], [[-1, -1]], [-1], lb=[0, 0])
    sol = solve(p)
    assert sol.optimal
    np.testing.assert_allclose(sol.x, [1, 0], atol=1e-7)
    assert sol.z[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.dual_objective <= sol.objective + 1e-7
    assert sol.dual_objective == pytest.approx(sol.objective, abs=1e-6)


def test_weak_duality_on_generated_programs():
    for name, p in reference_programs().items():
        sol = solve(p)
        assert sol.optimal, name
        assert sol.dual_objective <= sol.objective + 1e-7 * max(1.0, abs(sol.objective)), name


def test_infeasible_lp_has_farkas_ray():
    p = lp([1, 1], [[-1, 0], [0, -1], [1, 1]], [-1, -1, 1])
    for pre in (True, False):
        sol = solve(p, SolverOptions(presolve=pre))
        assert sol.status is Status.INFEASIBLE
        res, val = farkas_residual(p, sol.certificate)
        assert res <= 1e-7 and val < 0
        assert np.all(np.asarray(sol.certificate["z"]) >= -1e-9)


def test_infeasible_soc_with_bounds_has_farkas_ray():
    # x0 + x1 = 3, x in [0, 1]^2, ||(x0, x1)|| <= t
    A = sp.csr_matrix([[1.0, 1.0, 0.0]])
    G = sp.csr_matrix([[0, 0, -1.0], [-1.0, 0, 0], [0, -1.0, 0]])
    p = ConicProgram(np.array([0, 0, 1.0]), A, np.array([3.0]), G, np.zeros(3), 0, [3],
                     np.array([0, 0, -np.inf]), np.array([1, 1, np.inf]))
    sol = solve(p)
    assert sol.status is Status.INFEASIBLE
    res, val = farkas_residual(p, sol.certificate)
    assert res <= 1e-7 and val < 0
    z = np.asarray(sol.certificate["z"])
    assert z[0] >= np.linalg.norm(z[1:]) - 1e-9
    assert np.all(sol.certificate["zl"] >= -1e-9) and np.all(sol.certificate["zu"] >= -1e-9)


def test_presolve_conflict_still_gives_certificate():
    p = lp([0, 1], [[1, 0]], [1], lb=[2, 0], ub=[2, 1])
    sol = solve(p)
    assert sol.status is Status.INFEASIBLE and sol.message.startswith("presolve")
    res, val = farkas_residual(p, sol.certificate)
    assert res <= 1e-7 and val < 0


def test_unbounded_is_reported():
    p = lp([-1, 0], [[0, -1]], [0])
    assert solve(p).status is Status.UNBOUNDED


def test_iteration_limit_is_not_optimal():
    sol = solve(reference_programs()["case14_opf"], SolverOptions(max_iter=3))
    assert sol.status is Status.ITERATION_LIMIT
    assert np.all(np.isfinite(sol.x))


def test_solve_is_deterministic():
    p = reference_programs()["case6ww_separation_hull"]
    a, b = solve(p), solve(p)
    assert a.iterations == b.iterations
    np.testing.assert_allclose(a.x, b.x, atol=1e-12, rtol=0)


def test_solve_does_not_modify_the_program():
    p = reference_programs()["toy3_opf"]
    before = program_to_json(p)
    solve(p)
    assert program_to_json(p) == before


def test_json_round_trip_preserves_solution():
    for name, p in reference_programs().items():
        q = program_from_json(program_to_json(p))
        assert program_to_json(q) == program_to_json(p), name
    with pytest.raises(ValueError):
        program_from_json('{"format": "other"}')


@needs_reference
def test_serialized_programs_match_reference_solver():
    for name, p in reference_programs().items():
        q = program_from_json(program_to_json(p))
        ours, ref = solve(q), reference.solve_reference(q)
        assert ours.optimal and ref.optimal, name
        assert abs(ours.objective - ref.objective) <= 1e-6 * max(1.0, abs(ref.objective)), name


def test_invalid_programs_are_rejected():
    with pytest.raises(ValueError):
        ConicProgram(np.zeros(2), sp.csr_matrix((0, 2)), np.zeros(0), sp.csr_matrix((2, 2)), np.zeros(2), 1, [],
                     np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        solve(schur_toy(), SolverOptions(psd_method="bogus"))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.1, 3))
def test_random_soc_projection_matches_closed_form(v, r):
    # distance from v to the ball of radius r
    m = Model()
    x = m.add_vars("x", 3)
    t = m.add_var("t")
    m.soc(t, [x[k] - v[k] for k in range(3)])
    m.soc(r, list(x))
    m.minimize(t)
    sol = solve(m.build())
    assert sol.optimal
    expected = max(0.0, np.linalg.norm(v) - r)
    assert sol.objective == pytest.approx(expected, abs=1e-6)
