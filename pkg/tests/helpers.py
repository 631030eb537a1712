"""Builders shared by the test modules."""
from acots.netmodel import Bus, Generator, Network


def make_network(bus_specs, gens, lines, name="toy"):
    """Buses from tuples ``(id, p_load, q_load[, v_min, v_max])``, loads in p.u."""
    buses = []
    for spec in bus_specs:
        bid, pl, ql, *v = spec
        vmin, vmax = v if v else (0.9, 1.1)
        buses.append(Bus(bid, pl, ql, v_min=vmin, v_max=vmax))
    return Network(tuple(buses), tuple(gens), tuple(lines), 100.0, name)


def gen(bus, p_max=2.0, cost=1.0, p_min=0.0, q=1.0, quad=0.0):
    return Generator(bus, p_min, p_max, -q, q, quad, cost, 0.0)


def rel_close(a, b, tol):
    return abs(a - b) <= tol * max(abs(b), 1e-12)


_LOCAL_CACHE = {}


def local(net, x=None):
    """Memoized local AC OPF, keyed by case name and topology."""
    from acots.acopf import solve_local
    key = (net.name, None if x is None else tuple(int(v) for v in x))
    if key not in _LOCAL_CACHE:
        _LOCAL_CACHE[key] = solve_local(net, x)
    return _LOCAL_CACHE[key]


_MI_CACHE = {}


def _relaxation_feasible(net, x):
    """Screen out topologies whose convex relaxation is already infeasible."""
    from acots.conic import solve
    from acots.formulation import build_misocp_ots, fix_topology
    if net.name not in _MI_CACHE:
        _MI_CACHE[net.name] = build_misocp_ots(net)
    return solve(fix_topology(_MI_CACHE[net.name], x)).optimal


def feasible_topologies(net, count, seed=0, max_off=2):
    """Up to ``count`` random topologies (1..max_off lines off) with a feasible local OPF."""
    import numpy as np
    from acots.acopf import topology_connected
    rng = np.random.default_rng(seed)
    out, tried = [], set()
    for _ in range(40 * count):
        if len(out) == count:
            break
        k = int(rng.integers(1, max_off + 1))
        off = tuple(sorted(rng.choice(net.n_line, size=min(k, net.n_line), replace=False).tolist()))
        if off in tried:
            continue
        tried.add(off)
        x = np.ones(net.n_line)
        x[list(off)] = 0
        if not topology_connected(net, x) or not _relaxation_feasible(net, x):
            continue
        if local(net, x).feasible:
            out.append(x)
    return out


def soc_toy():
    """min x s.t. ||(1, 2)|| <= x; optimum sqrt(5)."""
    from acots.modeling import Model
    m = Model()
    x = m.add_var("x")
    m.soc(x, [1.0, 2.0])
    m.minimize(x)
    return m.build()


def schur_toy():
    """min W22 s.t. [[1, 2], [2, W22]] PSD; optimum 4."""
    from acots.modeling import Model
    m = Model()
    w = m.add_var("w22")
    m.psd([[1.0, 2.0], [2.0, w]])
    m.minimize(w)
    return m.build()


def random_psd_program(seed, d=6, n_eq=4, objective=True):
    """min <C, W> s.t. <A_k, W> = <A_k, W0>, W PSD, |W_ij| <= 10; feasible by W0.

    Without ``objective`` it is a pure feasibility instance.
    """
    import numpy as np
    from acots.modeling import Model
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    W0 = M @ M.T / d
    m = Model()
    W = [[None] * d for _ in range(d)]
    for a in range(d):
        for b in range(a, d):
            W[a][b] = W[b][a] = m.add_var(f"W[{a},{b}]", -10.0, 10.0)
    for _ in range(n_eq):
        S = rng.standard_normal((d, d))
        S = S + S.T
        m.eq(sum(S[a, b] * W[a][b] for a in range(d) for b in range(d)), float(np.sum(S * W0)))
    C = rng.standard_normal((d, d))
    C = C + C.T
    if objective:
        m.minimize(sum(C[a, b] * W[a][b] for a in range(d) for b in range(d)))
    m.psd(W)
    return m.build()


_PROGRAMS = {}


def reference_programs():
    """Ten named conic programs exercising every cone type the package emits (copies)."""
    if not _PROGRAMS:
        _PROGRAMS.update(_build_reference_programs())
    return {k: p.copy() for k, p in _PROGRAMS.items()}


def _build_reference_programs():
    import numpy as np
    from acots.cuts import build_disjunction, neighborhood
    from acots.formulation import CsBounds, build_misocp_ots, build_model, build_socp_opf, fix_topology
    from acots.modeling import Lin
    from acots.netmodel import builtin_case, cycle_basis
    c6 = builtin_case("nesta_case6ww__api")
    out = {"soc_toy": soc_toy(), "schur_toy": schur_toy()}
    for name, net in (("toy3_opf", builtin_case("toy3")), ("case6ww_opf", c6),
                      ("case9_opf", builtin_case("case9")),
                      ("case14_opf", builtin_case("case14", ignore_taps=True))):
        out[name] = build_socp_opf(net)[0]
    mi = build_misocp_ots(c6, angles=True)
    x = np.ones(c6.n_line)
    x[c6.find_line(1, 2)] = 0
    out["case6ww_switched_relaxation"] = fix_topology(mi, x)
    out["case6ww_misocp_relaxation"] = _relaxed(mi.program)
    line = c6.find_line(1, 2)
    balance, lines, voltage = neighborhood(c6, line, 2)
    b = CsBounds.default(c6)
    b.fixed_on[line] = True
    m, vm = build_model(c6, b, switching=True, balance_buses=balance, lines=lines, voltage_buses=voltage,
                        with_objective=False)
    m.minimize(Lin({int(vm.c[line]): 1.0}))
    out["case6ww_tightening_min_c12"] = m.build()
    cyc = cycle_basis(c6)[0]
    disj = build_disjunction(c6, cyc, CsBounds.default(c6))
    pt = np.zeros(disj.n_point)
    k = len(disj.layout.lines)
    pt[:k] = 1.1
    pt[2 * k:3 * k] = 1.0
    pt[3 * k:] = 1.0
    H, _, _ = disj.hull_model(pt)
    out["case6ww_separation_hull"] = H.build()
    return out


def _relaxed(prog):
    p = prog.copy()
    p.integer = p.integer[:0]
    return p


def topology_table(net, starts=3):
    """Best local objective of every topology from several starts (inf when none is feasible)."""
    import itertools
    import math
    import numpy as np
    from acots.acopf import solve_local
    table = {}
    for x in itertools.product((0, 1), repeat=net.n_line):
        best = math.inf
        for seed in range(starts):
            r = solve_local(net, np.array(x, float), seed=seed, n_perturb=3 if seed else 0)
            if r.feasible:
                best = min(best, r.objective)
        table[x] = best
    return table
