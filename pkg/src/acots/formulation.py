"""Conic relaxations of AC OPF / OTS in (c, s) variables and the exact feasibility check.

Variables per line ``l = (i, j)``: ``c_l = c_ij = c_ji``, ``s_l = s_ij = -s_ji``,
the switched copies ``c_ii^j`` and ``c_jj^i``, oriented flows ``p_ij, q_ij,
p_ji, q_ji`` and the switch ``x_l``.  Per bus: ``c_ii``; per generator:
``p^g, q^g`` (and an epigraph variable when the cost is quadratic).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic.program import ConicProgram
from .modeling import Lin, Model, lin_sum
from .netmodel import Network

THETA_SPAN = math.pi


@dataclass
class CsBounds:
    """Boxes for (c, s) of each line (valid when the line is on) and for c_ii."""
    c_lo: np.ndarray
    c_hi: np.ndarray
    s_lo: np.ndarray
    s_hi: np.ndarray
    cii_lo: np.ndarray
    cii_hi: np.ndarray
    fixed_on: np.ndarray = None

    def __post_init__(self):
        for name in ("c_lo", "c_hi", "s_lo", "s_hi", "cii_lo", "cii_hi"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).copy())
        if self.fixed_on is None:
            self.fixed_on = np.zeros(self.c_lo.size, dtype=bool)
        self.fixed_on = np.asarray(self.fixed_on, dtype=bool).copy()
        if np.any(self.c_lo > self.c_hi + 1e-12) or np.any(self.s_lo > self.s_hi + 1e-12):
            raise ValueError("inconsistent line boxes")
        if np.any(self.cii_lo <= 0) or np.any(self.cii_lo > self.cii_hi):
            raise ValueError("c_ii bounds must be positive and ordered")

    @classmethod
    def default(cls, net: Network) -> "CsBounds":
        vmax = np.array([b.v_max for b in net.buses])
        vmin = np.array([b.v_min for b in net.buses])
        ends = net.line_ends
        prod = vmax[ends[:, 0]] * vmax[ends[:, 1]] if net.n_line else np.zeros(0)
        return cls(-prod, prod.copy(), -prod, prod.copy(), vmin ** 2, vmax ** 2)

    def copy(self) -> "CsBounds":
        return CsBounds(self.c_lo, self.c_hi, self.s_lo, self.s_hi, self.cii_lo, self.cii_hi, self.fixed_on)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("c_lo", "c_hi", "s_lo", "s_hi", "cii_lo", "cii_hi", "fixed_on")}

    @classmethod
    def from_dict(cls, d: dict) -> "CsBounds":
        return cls(**{k: np.array(v) for k, v in d.items()})


@dataclass
class AcPoint:
    """Rectangular voltages, dispatch and topology."""
    e: np.ndarray
    f: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    x: np.ndarray

    def cs(self, net: Network):
        """(c_ii, c_l, s_l) induced by the voltages; c, s are zero on off lines."""
        e, f = self.e, self.f
        cii = e * e + f * f
        i, j = net.line_ends[:, 0], net.line_ends[:, 1]
        on = np.asarray(self.x, float)
        c = (e[i] * e[j] + f[i] * f[j]) * on
        s = (e[i] * f[j] - e[j] * f[i]) * on
        return cii, c, s

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("e", "f", "pg", "qg", "x")}


@dataclass
class VariableMap:
    """Variable indices of an (MI)SOCP built over a network.

    Arrays hold -1 where a variable does not exist in the program.
    """
    cii: np.ndarray
    c: np.ndarray
    s: np.ndarray
    cij: np.ndarray      # (n_line, 2): c_ii^j (from end) and c_jj^i (to end)
    p: np.ndarray        # (n_line, 2): p_ij, p_ji
    q: np.ndarray        # (n_line, 2)
    pg: np.ndarray
    qg: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    cost: np.ndarray     # epigraph variables for quadratic costs

    def s_oriented(self, line: int, forward: bool) -> tuple[int, float]:
        return int(self.s[line]), (1.0 if forward else -1.0)

    def point_indices(self, lines, buses) -> np.ndarray:
        """Variable indices of (c, s, x, c_ii, c_ii^j, c_jj^i) for a line/bus subset."""
        lines = list(lines)
        return np.concatenate([self.c[lines], self.s[lines], self.x[lines], self.cii[list(buses)],
                               self.cij[lines].ravel()])


@dataclass
class MIConicProgram:
    """Mixed-integer conic program with binary ``x`` variables.

    ``flow_pairs[k]`` lists ``(p, q)`` variable index pairs whose largest
    magnitude ranks binary ``k`` when branching ties.
    """
    program: ConicProgram
    binaries: np.ndarray
    vmap: VariableMap | None = None
    flow_pairs: np.ndarray | None = None
    n_base_rows: int = 0

    def copy(self) -> "MIConicProgram":
        return MIConicProgram(self.program.copy(), self.binaries.copy(), self.vmap,
                              None if self.flow_pairs is None else self.flow_pairs.copy(), self.n_base_rows)

    def with_rows(self, G_rows, h_rows) -> "MIConicProgram":
        out = self.copy()
        out.program = self.program.add_inequalities(G_rows, h_rows)
        return out


# ---------------------------------------------------------------------------
# builder

def _neg(a: np.ndarray) -> np.ndarray:
    return np.full(a.shape, -1, dtype=int)


def build_model(net: Network, bounds: CsBounds, *, switching: bool, angles: bool = False,
                balance_buses=None, lines=None, voltage_buses=None, gens=None,
                with_objective: bool = True):
    """Assemble the relaxation as a :class:`Model`.

    With ``switching`` the (c, s) products are gated by ``x`` through
    variable-bound and McCormick rows and ``c_ii^j`` copies; otherwise every
    line is on and ``c_ii^j = c_ii``.  The optional subsets restrict the
    model to a neighborhood (used by bound tightening).  Returns the model
    and its :class:`VariableMap`.
    """
    m = Model()
    nb, nl, ng = net.n_bus, net.n_line, net.n_gen
    lines = list(range(nl)) if lines is None else sorted(lines)
    balance_buses = list(range(nb)) if balance_buses is None else sorted(balance_buses)
    ends = net.line_ends
    if voltage_buses is None:
        voltage_buses = set(balance_buses) | {int(b) for l in lines for b in ends[l]}
    voltage_buses = sorted(voltage_buses)
    gens = [g for g in range(ng) if net.gen_bus[g] in set(balance_buses)] if gens is None else list(gens)

    vm = VariableMap(*(_neg(np.zeros(k, int)) for k in (nb, nl, nl)),
                     cij=_neg(np.zeros((nl, 2), int)), p=_neg(np.zeros((nl, 2), int)),
                     q=_neg(np.zeros((nl, 2), int)), pg=_neg(np.zeros(ng, int)), qg=_neg(np.zeros(ng, int)),
                     x=_neg(np.zeros(nl, int)), theta=_neg(np.zeros(nb, int)), cost=_neg(np.zeros(ng, int)))
    V = {}
    for i in voltage_buses:
        b = net.buses[i]
        V[i] = m.add_var(f"cii[{b.id}]", bounds.cii_lo[i], bounds.cii_hi[i])
        vm.cii[i] = m.index(V[i])
    P, Q = {}, {}
    for g in gens:
        gen = net.generators[g]
        P[g] = m.add_var(f"pg[{g}]", gen.p_min, gen.p_max)
        Q[g] = m.add_var(f"qg[{g}]", gen.q_min, gen.q_max)
        vm.pg[g], vm.qg[g] = m.index(P[g]), m.index(Q[g])
    X, C, S, CJ, PF, QF = {}, {}, {}, {}, {}, {}
    for l in lines:
        ln = net.lines[l]
        i, j = int(ends[l, 0]), int(ends[l, 1])
        tag = net.line_label(l)
        if switching:
            lo = 1.0 if (not ln.switchable or bounds.fixed_on[l]) else 0.0
            X[l] = m.add_var(f"x{tag}", lo, 1.0, integer=True)
            vm.x[l] = m.index(X[l])
            C[l] = m.add_var(f"c{tag}")
            S[l] = m.add_var(f"s{tag}")
            xl = X[l]
            m.ge(C[l] - bounds.c_lo[l] * xl)
            m.ge(bounds.c_hi[l] * xl - C[l])
            m.ge(S[l] - bounds.s_lo[l] * xl)
            m.ge(bounds.s_hi[l] * xl - S[l])
            cj = []
            for end, bus in enumerate((i, j)):
                v = m.add_var(f"cii{tag}[{end}]")
                vm.cij[l, end] = m.index(v)
                lo_b, hi_b = bounds.cii_lo[bus], bounds.cii_hi[bus]
                m.ge(v - lo_b * xl)
                m.ge(hi_b * xl - v)
                m.ge(v - V[bus] + hi_b * (1.0 - xl))
                m.ge(V[bus] - lo_b * (1.0 - xl) - v)
                cj.append(v)
        else:
            C[l] = m.add_var(f"c{tag}", bounds.c_lo[l], bounds.c_hi[l])
            S[l] = m.add_var(f"s{tag}", bounds.s_lo[l], bounds.s_hi[l])
            cj = [V[i], V[j]]
        vm.c[l], vm.s[l] = m.index(C[l]), m.index(S[l])
        CJ[l] = cj
        m.rsoc(cj[0], cj[1], [C[l], S[l]])
        G, B, bc = ln.G, ln.B, 0.5 * ln.charging
        flows = [(-G * cj[0] + G * C[l] - B * S[l], (B - bc) * cj[0] - B * C[l] - G * S[l]),
                 (-G * cj[1] + G * C[l] + B * S[l], (B - bc) * cj[1] - B * C[l] + G * S[l])]
        pq = []
        for end, (pe, qe) in enumerate(flows):
            pv = m.add_var(f"p{tag}[{end}]")
            qv = m.add_var(f"q{tag}[{end}]")
            m.eq(pv - pe)
            m.eq(qv - qe)
            vm.p[l, end], vm.q[l, end] = m.index(pv), m.index(qv)
            if math.isfinite(ln.s_max):
                m.soc(ln.s_max, [pv, qv])
            pq.append((pv, qv))
        PF[l] = pq
    adj = net.adjacency()
    line_set = set(lines)
    gens_at = {}
    for g in gens:
        gens_at.setdefault(int(net.gen_bus[g]), []).append(g)
    for i in balance_buses:
        b = net.buses[i]
        out_p, out_q = [], []
        for l in adj[i]:
            if l not in line_set:
                raise ValueError("balance bus has a line outside the model")
            end = 0 if ends[l, 0] == i else 1
            out_p.append(PF[l][end][0])
            out_q.append(PF[l][end][1])
        gp = lin_sum(P[g] for g in gens_at.get(i, []))
        gq = lin_sum(Q[g] for g in gens_at.get(i, []))
        m.eq(gp - b.p_load - b.g_shunt * V[i] - lin_sum(out_p), tag=("p", i))
        m.eq(gq - b.q_load + b.b_shunt * V[i] - lin_sum(out_q), tag=("q", i))
    if angles:
        _add_angles(m, net, bounds, vm, lines, switching, C, S, X, voltage_buses)
    if with_objective:
        obj = Lin()
        for g in gens:
            gen = net.generators[g]
            obj = obj + gen.cost_linear * P[g] + gen.cost_constant
            if gen.cost_quadratic > 0:
                t = m.add_var(f"cost[{g}]", 0.0)
                vm.cost[g] = m.index(t)
                m.rsoc(t, 1.0, [math.sqrt(gen.cost_quadratic) * P[g]])
                obj = obj + t
        m.minimize(obj)
    return m, vm


def _add_angles(m, net, bounds, vm, lines, switching, C, S, X, buses):
    from .cuts.envelopes import arctan_envelopes

    span = THETA_SPAN * max(1, net.n_bus - 1)
    T = {}
    for k, i in enumerate(buses):
        lo, hi = (0.0, 0.0) if k == 0 else (-span, span)
        T[i] = m.add_var(f"theta[{net.buses[i].id}]", lo, hi)
        vm.theta[i] = m.index(T[i])
    ends = net.line_ends
    for l in lines:
        env = arctan_envelopes(bounds.c_lo[l], bounds.c_hi[l], bounds.s_lo[l], bounds.s_hi[l])
        if env is None:
            continue
        i, j = int(ends[l, 0]), int(ends[l, 1])
        d = T[j] - T[i]
        off = (1.0 - X[l]) if switching else Lin()
        for gam, a, b in env.upper:
            m.ge(gam + a * C[l] + b * S[l] + (2 * math.pi - gam) * off - d)
        for gam, a, b in env.lower:
            m.ge(d - (gam + a * C[l] + b * S[l] - (2 * math.pi + gam) * off))


def _flow_pairs(vm: VariableMap, lines) -> np.ndarray:
    # (n_line, 2 directions, 2) indices of (p, q)
    return np.stack([vm.p[lines], vm.q[lines]], axis=-1)


def build_socp_opf(net: Network, bounds: CsBounds | None = None, *, angles: bool = False):
    """Continuous SOCP relaxation of AC OPF with every line on.

    Returns ``(program, vmap)``.
    """
    bounds = CsBounds.default(net) if bounds is None else bounds
    m, vm = build_model(net, bounds, switching=False, angles=angles)
    return m.build(), vm


def build_misocp_ots(net: Network, bounds: CsBounds | None = None, *, angles: bool = False) -> MIConicProgram:
    """Mixed-integer SOCP relaxation of AC OTS (optionally with arctangent envelopes)."""
    bounds = CsBounds.default(net) if bounds is None else bounds
    m, vm = build_model(net, bounds, switching=True, angles=angles)
    prog = m.build()
    lines = np.arange(net.n_line)
    return MIConicProgram(prog, vm.x.copy(), vm, _flow_pairs(vm, lines), prog.G.shape[0])


def fix_topology(mi: MIConicProgram, x) -> ConicProgram:
    """Continuous program with every binary fixed to ``x``."""
    p = mi.program.copy()
    x = np.asarray(x, float)
    p.lb[mi.binaries] = x
    p.ub[mi.binaries] = x
    p.integer = np.zeros(0, dtype=int)
    return p


# ---------------------------------------------------------------------------
# exact model

def line_flows(net: Network, e: np.ndarray, f: np.ndarray, x=None):
    """Oriented flows (p_ij, q_ij, p_ji, q_ji) per line; zero on off lines."""
    i, j = net.line_ends[:, 0], net.line_ends[:, 1]
    G = np.array([l.G for l in net.lines])
    B = np.array([l.B for l in net.lines])
    bc = np.array([0.5 * l.charging for l in net.lines])
    cii, cjj = e[i] ** 2 + f[i] ** 2, e[j] ** 2 + f[j] ** 2
    c = e[i] * e[j] + f[i] * f[j]
    s = e[i] * f[j] - e[j] * f[i]
    on = np.ones(net.n_line) if x is None else np.asarray(x, float)
    pij = (-G * cii + G * c - B * s) * on
    qij = ((B - bc) * cii - B * c - G * s) * on
    pji = (-G * cjj + G * c + B * s) * on
    qji = ((B - bc) * cjj - B * c + G * s) * on
    return pij, qij, pji, qji


@dataclass
class FeasibilityReport:
    max_violation: float
    p_balance: np.ndarray
    q_balance: np.ndarray
    voltage: np.ndarray
    line_limit: np.ndarray
    generator: np.ndarray
    tol: float

    @property
    def feasible(self) -> bool:
        return self.max_violation <= self.tol

    def worst(self) -> str:
        parts = {"p_balance": self.p_balance, "q_balance": self.q_balance, "voltage": self.voltage,
                 "line_limit": self.line_limit, "generator": self.generator}
        name, arr = max(parts.items(), key=lambda kv: np.abs(kv[1]).max(initial=0.0))
        k = int(np.argmax(np.abs(arr))) if arr.size else -1
        return f"{name}[{k}]"


def check_ac_feasibility(net: Network, pt: AcPoint, tol: float = 1e-6) -> FeasibilityReport:
    """Residuals of the exact rectangular AC equations at ``pt``."""
    e, f = np.asarray(pt.e, float), np.asarray(pt.f, float)
    if e.shape != (net.n_bus,) or f.shape != (net.n_bus,):
        raise ValueError("voltage vectors do not match the network")
    pij, qij, pji, qji = line_flows(net, e, f, pt.x)
    nb = net.n_bus
    ends = net.line_ends
    out_p = np.bincount(ends[:, 0], pij, nb) + np.bincount(ends[:, 1], pji, nb)
    out_q = np.bincount(ends[:, 0], qij, nb) + np.bincount(ends[:, 1], qji, nb)
    gp = np.bincount(net.gen_bus, pt.pg, nb) if net.n_gen else np.zeros(nb)
    gq = np.bincount(net.gen_bus, pt.qg, nb) if net.n_gen else np.zeros(nb)
    pd = np.array([b.p_load for b in net.buses])
    qd = np.array([b.q_load for b in net.buses])
    gs = np.array([b.g_shunt for b in net.buses])
    bs = np.array([b.b_shunt for b in net.buses])
    cii = e * e + f * f
    rp = gp - pd - gs * cii - out_p
    rq = gq - qd + bs * cii - out_q
    vmin = np.array([b.v_min for b in net.buses]) ** 2
    vmax = np.array([b.v_max for b in net.buses]) ** 2
    rv = np.maximum(0.0, np.maximum(vmin - cii, cii - vmax))
    smax = np.array([l.s_max for l in net.lines])
    with np.errstate(invalid="ignore"):
        rl = np.maximum(0.0, np.maximum(np.hypot(pij, qij), np.hypot(pji, qji)) - smax)
    rl = np.where(np.isfinite(smax), rl, 0.0)
    gens = net.generators
    rg = np.zeros(net.n_gen)
    for k, g in enumerate(gens):
        rg[k] = max(0.0, g.p_min - pt.pg[k], pt.pg[k] - g.p_max, g.q_min - pt.qg[k], pt.qg[k] - g.q_max)
    worst = max(np.abs(rp).max(initial=0.0), np.abs(rq).max(initial=0.0), rv.max(initial=0.0),
                rl.max(initial=0.0), rg.max(initial=0.0))
    return FeasibilityReport(float(worst), rp, rq, rv, rl, rg, tol)


def generation_cost(net: Network, pg) -> float:
    return float(sum(g.cost(p) for g, p in zip(net.generators, pg)))


def recover_angles(net: Network, c: np.ndarray, s: np.ndarray, on) -> np.ndarray:
    """Bus angles from line (c, s) along a BFS spanning forest of the on-lines.

    ``theta_j - theta_i = atan2(s_ij, c_ij)``; each component's first bus
    gets angle 0.
    """
    g = net.graph(on)
    theta = np.zeros(net.n_bus)
    seen = np.zeros(net.n_bus, bool)
    ends = net.line_ends
    for root in range(net.n_bus):
        if seen[root]:
            continue
        seen[root] = True
        queue = [root]
        while queue:
            u = queue.pop(0)
            for _, v, li in sorted(g.edges(u, keys=True), key=lambda t: t[2]):
                if seen[v]:
                    continue
                ang = math.atan2(s[li], c[li])
                theta[v] = theta[u] + (ang if ends[li, 0] == u else -ang)
                seen[v] = True
                queue.append(v)
    return theta


def lift_point(net: Network, pt: AcPoint, prog: ConicProgram, vm: VariableMap) -> np.ndarray:
    """Program variables induced by an AC point (zero where lines are off)."""
    z = np.zeros(prog.n)
    cii, c, s = pt.cs(net)
    x = np.asarray(pt.x, float)
    ends = net.line_ends

    def put(idx, val):
        idx = np.asarray(idx)
        val = np.broadcast_to(np.asarray(val, float), idx.shape)
        mask = idx >= 0
        z[idx[mask]] = val[mask]

    put(vm.cii, cii)
    put(vm.c, c)
    put(vm.s, s)
    put(vm.x, x)
    put(vm.cij[:, 0], cii[ends[:, 0]] * x)
    put(vm.cij[:, 1], cii[ends[:, 1]] * x)
    pij, qij, pji, qji = line_flows(net, pt.e, pt.f, x)
    put(vm.p[:, 0], pij)
    put(vm.p[:, 1], pji)
    put(vm.q[:, 0], qij)
    put(vm.q[:, 1], qji)
    put(vm.pg, pt.pg)
    put(vm.qg, pt.qg)
    for g, gen in enumerate(net.generators):
        if vm.cost[g] >= 0:
            z[vm.cost[g]] = gen.cost_quadratic * pt.pg[g] ** 2
    if np.any(vm.theta >= 0):
        th = recover_angles(net, c, s, x > 0.5)
        ref = int(np.where(vm.theta >= 0)[0][0])
        put(vm.theta, th - th[ref])
    return z
