import math
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acots.netmodel import (CaseParseError, Line, NetworkValidationError, admittance, builtin_case,
                            cycle_basis, cycle_is_closed_walk, format_case, network_from_json,
                            network_to_json, parse_case)
from helpers import gen, make_network

CASE_HEAD = """function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
{bus}
];
mpc.gen = [
{gen}
];
mpc.branch = [
{branch}
];
mpc.gencost = [
{cost}
];
"""


def case_text(bus, gens=(), branch=(), cost=()):
    return CASE_HEAD.format(bus="\n".join(bus), gen="\n".join(gens), branch="\n".join(branch),
                            cost="\n".join(cost))


BUS = "{i} 1 {pd} {qd} 0 0 1 1 0 100 1 1.1 0.9;"
GEN = "{i} 0 0 50 -50 1 100 1 100 0;"
COST = "2 0 0 3 0 10 0;"


def br(f, t, r=0.01, x=0.1, rate=100, status=1, tap=0, shift=0):
    return f"{f} {t} {r} {x} 0 {rate} {rate} {rate} {tap} {shift} {status} -360 360;"


# -- parsing -----------------------------------------------------------------

def test_case6ww_generator_table_in_per_unit(case6ww):
    assert len(case6ww.generators) == 3
    assert [g.bus for g in case6ww.generators] == [1, 2, 3]
    np.testing.assert_allclose([g.p_max for g in case6ww.generators], [2.0, 1.06, 0.93])
    np.testing.assert_allclose([g.q_min for g in case6ww.generators], [-1.0] * 3)
    np.testing.assert_allclose([g.q_max for g in case6ww.generators], [1.0] * 3)
    # $/MWh rescaled to $/p.u.h
    np.testing.assert_allclose([g.cost_linear for g in case6ww.generators], [127.6311, 58.6272, 129.111])
    loads = {b.id: (b.p_load, b.q_load) for b in case6ww.buses}
    for i in (4, 5, 6):
        np.testing.assert_allclose(loads[i], (0.7824, 0.70))
    assert case6ww.n_line == 11


def test_single_bus_without_branches_is_valid():
    net = parse_case(case_text([BUS.format(i=1, pd=50, qd=0)], [GEN.format(i=1)], [], [COST]))
    assert net.n_bus == 1 and net.n_line == 0
    assert cycle_basis(net) == []


def test_out_of_service_branch_is_dropped():
    text = case_text([BUS.format(i=k, pd=0, qd=0) for k in (1, 2, 3)], [GEN.format(i=1)],
                     [br(1, 2), br(2, 3), br(1, 3, status=0)], [COST])
    net = parse_case(text)
    assert [l.key for l in net.lines] == [(1, 2), (2, 3)]


def test_disconnected_case_is_rejected():
    text = case_text([BUS.format(i=k, pd=0, qd=0) for k in (1, 2, 3)], [GEN.format(i=1)],
                     [br(1, 2)], [COST])
    with pytest.raises(NetworkValidationError, match="not connected"):
        parse_case(text)


def test_malformed_row_reports_line_number():
    text = case_text([BUS.format(i=1, pd=0, qd=0), "2 1 0 0;"], [GEN.format(i=1)], [br(1, 2)], [COST])
    with pytest.raises(CaseParseError) as err:
        parse_case(text)
    assert err.value.line == 5


def test_tap_transformer_is_rejected_unless_ignored():
    text = case_text([BUS.format(i=k, pd=0, qd=0) for k in (1, 2)], [GEN.format(i=1)],
                     [br(1, 2, tap=0.97)], [COST])
    with pytest.raises(NetworkValidationError, match="branch 1-2"):
        parse_case(text)
    assert parse_case(text, ignore_taps=True).n_line == 1
    with pytest.raises(NetworkValidationError):
        builtin_case("case14")


def test_zero_rate_means_unlimited():
    text = case_text([BUS.format(i=k, pd=0, qd=0) for k in (1, 2)], [GEN.format(i=1)],
                     [br(1, 2, rate=0)], [COST])
    assert parse_case(text).lines[0].s_max == math.inf


def test_parse_format_parse_round_trip(case6ww, case9, case14):
    for net in (case6ww, case9, case14):
        again = parse_case(format_case(net), name=net.name)
        assert again == net


def test_json_round_trip(case6ww, case14):
    for net in (case6ww, case14):
        assert network_from_json(network_to_json(net)) == net


def test_invalid_records():
    with pytest.raises(NetworkValidationError):
        make_network([(1, 0, 0, 1.1, 0.9)], [], [])
    with pytest.raises(NetworkValidationError):
        gen(1, p_min=2.0, p_max=1.0)
    with pytest.raises(NetworkValidationError):
        Line(1, 1, 0.0, 0.1)
    with pytest.raises(NetworkValidationError):
        make_network([(1, 0, 0)], [gen(7)], [])


# -- admittance ----------------------------------------------------------------

def test_admittance_examples():
    assert admittance(0.0, 0.1) == pytest.approx((0.0, 10.0))
    assert admittance(1.0, 0.0) == pytest.approx((-1.0, 0.0))
    # -1/(r + jx) = (-r + jx) / (r^2 + x^2), evaluated exactly
    r, x = Fraction(1, 100), Fraction(1, 10)
    d = r * r + x * x
    G, B = admittance(0.01, 0.1)
    assert G == pytest.approx(float(-r / d), rel=1e-15)
    assert B == pytest.approx(float(x / d), rel=1e-15)
    assert str(G).startswith("-0.990099") and str(B).startswith("9.90099")
    with pytest.raises(ValueError):
        admittance(0.0, 0.0)


@given(st.floats(1e-4, 1.0), st.floats(1e-4, 1.0))
def test_admittance_is_negated_inverse_impedance(r, x):
    G, B = admittance(r, x)
    assert complex(G, B) == pytest.approx(-1.0 / complex(r, x), rel=1e-12)


def test_reactive_line_carries_no_flow_at_equal_voltages():
    from acots.formulation import line_flows
    net = make_network([(1, 0, 0), (2, 0, 0)], [gen(1)], [Line(1, 2, 0.0, 0.2)])
    p, q = line_flows(net, np.ones(2), np.zeros(2))[:2]
    np.testing.assert_allclose(p, 0.0, atol=1e-15)
    np.testing.assert_allclose(q, 0.0, atol=1e-15)


# -- cycle basis -----------------------------------------------------------------

def test_tree_has_no_cycles():
    net = make_network([(k, 0, 0) for k in range(1, 5)], [gen(1)],
                       [Line(1, 2, 0, 0.1), Line(2, 3, 0, 0.1), Line(2, 4, 0, 0.1)])
    assert cycle_basis(net) == []


def test_triangle_has_one_three_cycle():
    net = make_network([(k, 0, 0) for k in range(1, 4)], [gen(1)],
                       [Line(1, 2, 0, 0.1), Line(2, 3, 0, 0.1), Line(3, 1, 0, 0.1)])
    (cyc,) = cycle_basis(net)
    assert len(cyc) == 3 and cycle_is_closed_walk(net, cyc)


def test_case6ww_has_six_cycles(case6ww):
    basis = cycle_basis(case6ww)
    assert len(basis) == 11 - 6 + 1
    assert all(cycle_is_closed_walk(case6ww, c) for c in basis)
    assert max(len(c) for c in basis) <= 4


def test_parallel_lines_form_a_two_cycle():
    net = make_network([(1, 0, 0), (2, 0, 0)], [gen(1)], [Line(1, 2, 0, 0.1), Line(1, 2, 0, 0.2)])
    (cyc,) = cycle_basis(net)
    assert sorted(cyc.lines) == [0, 1] and cycle_is_closed_walk(net, cyc)


def _gf2_rank(vectors):
    pivots = {}
    rank = 0
    for v in vectors:
        while v:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = v
                rank += 1
                break
            v ^= pivots[top]
    return rank


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 12), st.integers(0, 14), st.integers(0, 10**6))
def test_cycle_count_and_independence_on_random_graphs(n, extra, seed):
    rng = np.random.default_rng(seed)
    g = nx.random_labeled_tree(n, seed=seed) if hasattr(nx, "random_labeled_tree") \
        else nx.random_tree(n, seed=seed)
    edges = list(g.edges())
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        edges.append((int(a), int(b)))
    net = make_network([(k + 1, 0, 0) for k in range(n)], [gen(1)],
                       [Line(a + 1, b + 1, 0.0, 0.1) for a, b in edges])
    basis = cycle_basis(net)
    assert len(basis) == len(edges) - n + 1
    assert all(cycle_is_closed_walk(net, c) for c in basis)
    assert _gf2_rank([c.incidence() for c in basis]) == len(basis)
