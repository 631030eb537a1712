"""Local AC OPF for a fixed topology and the single-line-removal heuristic.

The nonconvex problem is solved in rectangular voltage coordinates by a
primal-dual interior point method with exact second derivatives.  Every
constraint of the model is either a quadratic form in ``v = [e; f]`` (bus
balances, squared voltage magnitudes), the sum of squares of two quadratic
forms (apparent power limits) or linear (generator limits), which keeps the
derivatives simple and exact.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .formulation import AcPoint, check_ac_feasibility, generation_cost, line_flows, recover_angles
from .netmodel import Network

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-5


# ---------------------------------------------------------------------------
# quadratic forms

class QuadForms:
    """A stack of quadratic forms ``g_k(v) = sum val * v[a] * v[b]``."""

    def __init__(self, n_var: int):
        self.n = n_var
        self.k: list[int] = []
        self.a: list[int] = []
        self.b: list[int] = []
        self.val: list[float] = []
        self.m = 0

    def new(self) -> int:
        self.m += 1
        return self.m - 1

    def add(self, k: int, a: int, b: int, val: float):
        if val != 0.0:
            self.k.append(k)
            self.a.append(a)
            self.b.append(b)
            self.val.append(float(val))

    def freeze(self):
        self.K = np.array(self.k, dtype=int)
        self.A = np.array(self.a, dtype=int)
        self.B = np.array(self.b, dtype=int)
        self.V = np.array(self.val, dtype=float)
        return self

    def value(self, v):
        return np.bincount(self.K, self.V * v[self.A] * v[self.B], minlength=self.m)

    def jac(self, v) -> sp.csr_matrix:
        rows = np.concatenate([self.K, self.K])
        cols = np.concatenate([self.A, self.B])
        vals = np.concatenate([self.V * v[self.B], self.V * v[self.A]])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))

    def hess(self, w) -> sp.csr_matrix:
        vals = self.V * w[self.K]
        rows = np.concatenate([self.A, self.B])
        cols = np.concatenate([self.B, self.A])
        return sp.csr_matrix((np.concatenate([vals, vals]), (rows, cols)), shape=(self.n, self.n))


def _add_cii(Q, k, nb, i, w):
    Q.add(k, i, i, w)
    Q.add(k, nb + i, nb + i, w)


def _add_c(Q, k, nb, i, j, w):
    Q.add(k, i, j, w)
    Q.add(k, nb + i, nb + j, w)


def _add_s(Q, k, nb, i, j, w):
    # s_ij = e_i f_j - e_j f_i
    Q.add(k, i, nb + j, w)
    Q.add(k, j, nb + i, -w)


def _add_flow(Q, k, nb, ln, a, b, kind, w=1.0):
    """Add ``w`` times the p or q flow leaving bus ``a`` towards ``b``.

    ``p_ab = -G c_aa + G c_ab - B s_ab`` and ``q_ab = (B - b_c/2) c_aa - B c_ab
    - G s_ab`` hold at both ends because ``s_ba = -s_ab``.
    """
    G, B = ln.G, ln.B
    if kind == "p":
        _add_cii(Q, k, nb, a, -G * w)
        _add_c(Q, k, nb, a, b, G * w)
        _add_s(Q, k, nb, a, b, -B * w)
    else:
        _add_cii(Q, k, nb, a, (B - 0.5 * ln.charging) * w)
        _add_c(Q, k, nb, a, b, -B * w)
        _add_s(Q, k, nb, a, b, -G * w)


# ---------------------------------------------------------------------------
# problem assembly

@dataclass
class _Problem:
    net: Network
    buses: np.ndarray       # modelled buses (internal indices)
    lines: np.ndarray       # modelled on-lines
    gens: np.ndarray
    refs: list[int]         # positions (in buses) with f fixed to 0
    nv: int
    n: int
    bal: QuadForms
    bal_lin: sp.csr_matrix
    bal_const: np.ndarray
    vq: QuadForms           # squared magnitudes of buses with a voltage range
    v_lo: np.ndarray
    v_hi: np.ndarray
    vfix: QuadForms         # squared magnitudes of buses with a fixed voltage
    vfix_val: np.ndarray
    flow_p: QuadForms
    flow_q: QuadForms
    smax2: np.ndarray
    g_lo: np.ndarray        # bounds of [pg, qg]
    g_hi: np.ndarray
    c2: np.ndarray
    c1: np.ndarray
    c0: float


def _build_problem(net: Network, on: np.ndarray, buses: np.ndarray, gens: np.ndarray, refs) -> _Problem:
    pos = {int(b): t for t, b in enumerate(buses)}
    nb = len(buses)
    ng = len(gens)
    nv = 2 * nb
    n = nv + 2 * ng
    ends = net.line_ends
    lines = np.array([l for l in range(net.n_line) if on[l] and int(ends[l, 0]) in pos], dtype=int)

    bal = QuadForms(nv)
    for _ in range(2 * nb):
        bal.new()
    for t, b in enumerate(buses):
        bus = net.buses[b]
        _add_cii(bal, t, nb, t, -bus.g_shunt)
        _add_cii(bal, nb + t, nb, t, bus.b_shunt)
    for l in lines:
        ln = net.lines[l]
        i, j = pos[int(ends[l, 0])], pos[int(ends[l, 1])]
        # minus outgoing flow at each end
        _add_flow(bal, i, nb, ln, i, j, "p", -1.0)
        _add_flow(bal, nb + i, nb, ln, i, j, "q", -1.0)
        _add_flow(bal, j, nb, ln, j, i, "p", -1.0)
        _add_flow(bal, nb + j, nb, ln, j, i, "q", -1.0)
    bal.freeze()
    ri, ci = [], []
    for g_pos, g in enumerate(gens):
        t = pos[int(net.gen_bus[g])]
        ri += [t, nb + t]
        ci += [nv + g_pos, nv + ng + g_pos]
    bal_lin = sp.csr_matrix((np.ones(len(ri)), (ri, ci)), shape=(2 * nb, n))
    bal_const = -np.concatenate([[net.buses[b].p_load for b in buses], [net.buses[b].q_load for b in buses]])

    v_lo = np.array([net.buses[b].v_min for b in buses]) ** 2
    v_hi = np.array([net.buses[b].v_max for b in buses]) ** 2
    # buses with a fixed magnitude get an equality instead of two inequalities
    fixed_v = np.where(v_hi - v_lo <= 1e-10)[0]
    free_v = np.where(v_hi - v_lo > 1e-10)[0]
    vq = QuadForms(nv)
    for t in free_v:
        _add_cii(vq, vq.new(), nb, t, 1.0)
    vq.freeze()
    vfix = QuadForms(nv)
    for t in fixed_v:
        _add_cii(vfix, vfix.new(), nb, t, 1.0)
    vfix.freeze()

    fp, fq = QuadForms(nv), QuadForms(nv)
    smax2 = []
    for l in lines:
        ln = net.lines[l]
        if not math.isfinite(ln.s_max):
            continue
        i, j = pos[int(ends[l, 0])], pos[int(ends[l, 1])]
        for a, b in ((i, j), (j, i)):
            _add_flow(fp, fp.new(), nb, ln, a, b, "p")
            _add_flow(fq, fq.new(), nb, ln, a, b, "q")
            smax2.append(ln.s_max ** 2)
    fp.freeze()
    fq.freeze()
    gl = [net.generators[g] for g in gens]
    g_lo = np.array([g.p_min for g in gl] + [g.q_min for g in gl], float)
    g_hi = np.array([g.p_max for g in gl] + [g.q_max for g in gl], float)
    return _Problem(net, np.asarray(buses), lines, np.asarray(gens), list(refs), nv, n, bal, bal_lin, bal_const,
                    vq, v_lo[free_v], v_hi[free_v], vfix, 0.5 * (v_lo + v_hi)[fixed_v], fp, fq, np.array(smax2), g_lo, g_hi,
                    np.array([g.cost_quadratic for g in gl]), np.array([g.cost_linear for g in gl]),
                    float(sum(g.cost_constant for g in gl)))


class _Functions:
    """Objective, constraints and derivatives in the ``h(z) <= 0`` convention."""

    def __init__(self, pb: _Problem):
        self.pb = pb
        nv, n = pb.nv, pb.n
        ng = len(pb.gens)
        nb = len(pb.buses)
        ref_rows = [(k, nb + t) for k, t in enumerate(pb.refs)]
        self.ref = sp.csr_matrix((np.ones(len(ref_rows)), ([r for r, _ in ref_rows], [c for _, c in ref_rows])),
                                 shape=(len(ref_rows), n))
        # linear generator bounds
        rows, cols, vals, rhs = [], [], [], []
        for k in range(2 * ng):
            if math.isfinite(pb.g_hi[k]):
                rows.append(len(rhs)); cols.append(nv + k); vals.append(1.0); rhs.append(pb.g_hi[k])
            if math.isfinite(pb.g_lo[k]):
                rows.append(len(rhs)); cols.append(nv + k); vals.append(-1.0); rhs.append(-pb.g_lo[k])
        self.glin = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
        self.glin_rhs = np.array(rhs, float)
        self.nvq = pb.v_lo.size
        self.n_eq = 2 * nb + pb.vfix_val.size + len(ref_rows)
        self.n_ineq = 2 * self.nvq + pb.smax2.size + len(rhs)
        self.ng = ng

    def _pad(self, M: sp.csr_matrix) -> sp.csr_matrix:
        M = M.tocsr()
        return sp.csr_matrix((M.data, M.indices, M.indptr), shape=(M.shape[0], self.pb.n))

    def f(self, z):
        pb = self.pb
        pg = z[pb.nv:pb.nv + self.ng]
        val = float(pb.c2 @ pg ** 2 + pb.c1 @ pg + pb.c0)
        grad = np.zeros(pb.n)
        grad[pb.nv:pb.nv + self.ng] = 2 * pb.c2 * pg + pb.c1
        return val, grad

    def f_hess(self):
        pb = self.pb
        d = np.zeros(pb.n)
        d[pb.nv:pb.nv + self.ng] = 2 * pb.c2
        return sp.diags(d)

    def g(self, z):
        pb = self.pb
        v = z[:pb.nv]
        val = np.concatenate([pb.bal.value(v) + pb.bal_lin @ z + pb.bal_const,
                              pb.vfix.value(v) - pb.vfix_val, self.ref @ z])
        jac = sp.vstack([self._pad(pb.bal.jac(v)) + pb.bal_lin, self._pad(pb.vfix.jac(v)), self.ref],
                        format="csr")
        return val, jac

    def h(self, z):
        pb = self.pb
        v = z[:pb.nv]
        cii = pb.vq.value(v)
        Jv = self._pad(pb.vq.jac(v))
        parts = [pb.v_lo - cii, cii - pb.v_hi]
        jacs = [-Jv, Jv]
        if pb.smax2.size:
            p, q = pb.flow_p.value(v), pb.flow_q.value(v)
            Jp, Jq = self._pad(pb.flow_p.jac(v)), self._pad(pb.flow_q.jac(v))
            parts.append(p * p + q * q - pb.smax2)
            jacs.append(sp.diags(2 * p) @ Jp + sp.diags(2 * q) @ Jq)
        parts.append(self.glin @ z - self.glin_rhs)
        jacs.append(self.glin)
        return np.concatenate(parts), sp.vstack(jacs, format="csr")

    def lag_hess(self, z, lam, mu, obj_scale):
        pb = self.pb
        nv, n = pb.nv, pb.n
        nb = len(pb.buses)
        v = z[:nv]
        nvq = self.nvq
        Hv = pb.bal.hess(lam[:2 * nb]) + pb.vfix.hess(lam[2 * nb:2 * nb + pb.vfix_val.size])
        Hv = Hv + pb.vq.hess(mu[nvq:2 * nvq] - mu[:nvq])
        k = pb.smax2.size
        if k:
            mf = mu[2 * nvq:2 * nvq + k]
            p, q = pb.flow_p.value(v), pb.flow_q.value(v)
            Jp, Jq = pb.flow_p.jac(v), pb.flow_q.jac(v)
            Hv = Hv + 2 * (Jp.T @ sp.diags(mf) @ Jp + Jq.T @ sp.diags(mf) @ Jq)
            Hv = Hv + pb.flow_p.hess(2 * mf * p) + pb.flow_q.hess(2 * mf * q)
        Hv = Hv.tocoo()
        H = sp.csr_matrix((Hv.data, (Hv.row, Hv.col)), shape=(n, n))
        return (H + obj_scale * self.f_hess()).tocsr()


# ---------------------------------------------------------------------------
# interior point method

@dataclass
class IpmOptions:
    feastol: float = 1e-9
    gradtol: float = 1e-7
    comptol: float = 1e-8
    costtol: float = 1e-8
    max_iter: int = 150
    xi: float = 0.99995
    sigma: float = 0.1
    z0: float = 1.0
    # looser "acceptable" level used when the strict tests stall
    acc_feastol: float = 1e-5
    acc_gradtol: float = 1e-6
    acc_comptol: float = 1e-5
    stall_step: float = 1e-6
    verbose: bool = False


@dataclass
class IpmResult:
    converged: bool
    z: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    iterations: int
    message: str


def _ipm(fn: _Functions, z0: np.ndarray, opts: IpmOptions) -> IpmResult:
    """Primal-dual interior point for ``min f  s.t.  g = 0, h <= 0``."""
    z = z0.copy()
    fval, df = fn.f(z)
    obj_scale = 1.0 / max(1.0, np.abs(df).max(initial=0.0))
    gv, dg = fn.g(z)
    hv, dh = fn.h(z)
    neq, niq = gv.size, hv.size
    gamma = 1.0
    Z = np.full(niq, opts.z0)
    Z = np.where(hv < -opts.z0, -hv, Z)
    mu = gamma / Z
    lam = np.zeros(neq)
    f0 = fval * obj_scale
    msg = "iteration limit"
    converged = False

    def conds(z, gv, hv, Lx, lam, mu, Z, fcur, fprev):
        nx = max(1.0, np.abs(z).max(initial=0.0))
        feas = max(np.abs(gv).max(initial=0.0), hv.max(initial=0.0)) / (1.0 + max(np.abs(z).max(initial=0.0), np.abs(Z).max(initial=0.0)))
        grad = np.abs(Lx).max(initial=0.0) / (1.0 + max(np.abs(lam).max(initial=0.0), np.abs(mu).max(initial=0.0)))
        comp = float(Z @ mu) / (1.0 + nx)
        cost = abs(fcur - fprev) / (1.0 + abs(fprev))
        return feas, grad, comp, cost

    acceptable = None
    it = 0
    for it in range(1, opts.max_iter + 1):
        fval, df = fn.f(z)
        f_cur = fval * obj_scale
        Lx = obj_scale * df + dg.T @ lam + dh.T @ mu
        Lxx = fn.lag_hess(z, lam, mu, obj_scale)
        zinv = 1.0 / Z
        dh_zinv = dh.T @ sp.diags(zinv)
        M = Lxx + dh_zinv @ sp.diags(mu) @ dh
        N = Lx + dh_zinv @ (mu * hv + gamma)
        K = sp.bmat([[M, dg.T], [dg, None]], format="csc")
        rhs = np.concatenate([-N, -gv])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                sol = spla.spsolve(K, rhs)
        except (RuntimeError, ValueError) as exc:
            msg = f"linear solve failed: {exc}"
            break
        if not np.all(np.isfinite(sol)):
            # regularize a singular system
            reg = sp.diags(np.concatenate([np.full(fn.pb.n, 1e-8), np.full(neq, -1e-8)]))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                sol = spla.spsolve((K + reg).tocsc(), rhs)
            if not np.all(np.isfinite(sol)):
                msg = "singular Newton system"
                break
        dz = sol[:fn.pb.n]
        dlam = sol[fn.pb.n:]
        dZ = -hv - Z - dh @ dz
        dmu = -mu + zinv * (gamma - mu * dZ)
        neg = dZ < 0
        ap = min(opts.xi * float(np.min(-Z[neg] / dZ[neg])) if neg.any() else 1.0, 1.0)
        neg = dmu < 0
        ad = min(opts.xi * float(np.min(-mu[neg] / dmu[neg])) if neg.any() else 1.0, 1.0)
        z = z + ap * dz
        Z = Z + ap * dZ
        lam = lam + ad * dlam
        mu = mu + ad * dmu
        if niq:
            gamma = opts.sigma * float(Z @ mu) / niq
        fval, df = fn.f(z)
        gv, dg = fn.g(z)
        hv, dh = fn.h(z)
        Lx = obj_scale * df + dg.T @ lam + dh.T @ mu
        feas, grad, comp, cost = conds(z, gv, hv, Lx, lam, mu, Z, fval * obj_scale, f_cur)
        if not np.all(np.isfinite(z)):
            msg = "numerical failure"
            break
        if opts.verbose:
            print(f"{it:3d} f {fval:.6f} feas {feas:.1e} grad {grad:.1e} comp {comp:.1e} cost {cost:.1e} "
                  f"ap {ap:.2e} ad {ad:.2e}")
        if feas < opts.feastol and grad < opts.gradtol and comp < opts.comptol and cost < opts.costtol:
            converged, msg = True, "converged"
            break
        if feas < opts.acc_feastol and grad < opts.acc_gradtol and comp < opts.acc_comptol:
            if acceptable is None or feas <= acceptable[0]:
                acceptable = (feas, z.copy(), lam.copy(), mu.copy())
        if acceptable is not None and ap < opts.stall_step:
            break
    if not converged and acceptable is not None:
        _, z, lam, mu = acceptable
        converged, msg = True, "converged to acceptable level"
    return IpmResult(converged, z, lam, mu, it, msg)


# ---------------------------------------------------------------------------
# public interface

@dataclass
class LocalSolveResult:
    status: str                     # "feasible" or "failed"
    point: AcPoint | None
    objective: float
    max_residual: float
    iterations: int = 0
    message: str = ""
    attempts: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _components(net: Network, on: np.ndarray):
    g = net.graph(on)
    g.add_nodes_from(range(net.n_bus))
    return [sorted(c) for c in nx.connected_components(g)]


def _active(net: Network, bus: int) -> bool:
    b = net.buses[bus]
    return any(abs(v) > 0 for v in (b.p_load, b.q_load, b.g_shunt, b.b_shunt)) or bus in set(net.gen_bus.tolist())


def topology_connected(net: Network, x) -> bool:
    """True when all load, shunt and generator buses share one on-component."""
    on = np.asarray(x, float) > 0.5
    comps = [c for c in _components(net, on) if any(_active(net, b) for b in c)]
    return len(comps) <= 1


def warm_from_relaxation(net: Network, cii, c, s, on) -> tuple[np.ndarray, np.ndarray]:
    """Voltages ``e + jf`` with magnitudes sqrt(c_ii) and angles from atan2(s, c) on a spanning tree."""
    mag = np.sqrt(np.maximum(np.asarray(cii, float), 0.0))
    th = recover_angles(net, np.asarray(c, float), np.asarray(s, float), np.asarray(on) > 0.5)
    return mag * np.cos(th), mag * np.sin(th)


def _initial(net, pb: _Problem, warm) -> np.ndarray:
    nb = len(pb.buses)
    z = np.zeros(pb.n)
    vmid = np.array([0.5 * (net.buses[b].v_min + net.buses[b].v_max) for b in pb.buses])
    e, f = vmid, np.zeros(nb)
    pg = np.array([0.5 * (lo + hi) if np.isfinite(lo + hi) else 0.0 for lo, hi in zip(pb.g_lo, pb.g_hi)])
    if warm is not None:
        e = np.asarray(warm.e, float)[pb.buses]
        f = np.asarray(warm.f, float)[pb.buses]
        if warm.pg is not None and len(warm.pg):
            pg = np.concatenate([np.asarray(warm.pg, float)[pb.gens], np.asarray(warm.qg, float)[pb.gens]])
    z[:nb], z[nb:2 * nb] = e, f
    # keep the reference angles at zero by rotating each start
    if pb.refs:
        r = pb.refs[0]
        ang = math.atan2(z[nb + r], z[r])
        cv = (z[:nb] + 1j * z[nb:2 * nb]) * np.exp(-1j * ang)
        z[:nb], z[nb:2 * nb] = cv.real, cv.imag
    lo, hi = pb.g_lo, pb.g_hi
    z[pb.nv:] = np.clip(pg, np.where(np.isfinite(lo), lo, -np.inf), np.where(np.isfinite(hi), hi, np.inf))
    return z


def solve_local(net: Network, x=None, warm: AcPoint | None = None, *, seed: int = 0,
                n_perturb: int = 3, opts: IpmOptions | None = None) -> LocalSolveResult:
    """Local optimum of AC OPF with the lines where ``x = 0`` removed.

    ``warm`` may be any :class:`AcPoint` (only ``e``, ``f``, ``pg``, ``qg`` are
    used).  On failure the warm start is perturbed at random up to
    ``n_perturb`` times.  A feasible result always passes
    :func:`check_ac_feasibility` at 1e-6.
    """
    opts = opts or IpmOptions()
    x = np.ones(net.n_line) if x is None else np.asarray(x, float)
    on = x > 0.5
    comps = _components(net, on)
    live = [c for c in comps if any(_active(net, b) for b in c)]
    if len(live) > 1:
        return LocalSolveResult("failed", None, math.inf, math.inf,
                                message=f"topology splits load/generator buses into {len(live)} islands")
    if not live:
        live = [comps[0]]
    buses = np.array(live[0], dtype=int)
    if not any(int(net.gen_bus[g]) in set(buses.tolist()) for g in range(net.n_gen)):
        return LocalSolveResult("failed", None, math.inf, math.inf, message="island with load and no generation")
    bus_set = set(buses.tolist())
    gens = np.array([g for g in range(net.n_gen) if int(net.gen_bus[g]) in bus_set], dtype=int)
    gen_buses = [t for t, b in enumerate(buses) if int(b) in set(net.gen_bus[gens].tolist())]
    refs = [gen_buses[0] if gen_buses else 0]
    pb = _build_problem(net, on, buses, gens, refs)
    fn = _Functions(pb)
    rng = np.random.default_rng(seed)
    z0 = _initial(net, pb, warm)
    best = None
    for attempt in range(n_perturb + 1):
        start = z0.copy()
        if attempt:
            nb = len(buses)
            start[:nb] *= 1.0 + 0.05 * rng.standard_normal(nb)
            start[nb:2 * nb] += 0.05 * rng.standard_normal(nb)
        res = _ipm(fn, start, opts)
        pt = _to_point(net, pb, res.z, x)
        rep = check_ac_feasibility(net, pt, FEASIBILITY_TOL)
        obj = generation_cost(net, pt.pg)
        out = LocalSolveResult("feasible" if (res.converged and rep.feasible) else "failed", pt, obj,
                               rep.max_violation, res.iterations,
                               res.message if rep.feasible else f"{res.message}; worst residual {rep.worst()}",
                               attempt + 1)
        if out.feasible:
            return out
        if best is None or out.max_residual < best.max_residual:
            best = out
    best.objective = math.inf if not best.feasible else best.objective
    return best


def _to_point(net, pb: _Problem, z, x) -> AcPoint:
    nb_all = net.n_bus
    nb = len(pb.buses)
    e = np.zeros(nb_all)
    f = np.zeros(nb_all)
    # pruned buses sit at a flat, in-range voltage
    for b in range(nb_all):
        bus = net.buses[b]
        e[b] = min(max(1.0, bus.v_min), bus.v_max)
    e[pb.buses] = z[:nb]
    f[pb.buses] = z[nb:2 * nb]
    pg = np.zeros(net.n_gen)
    qg = np.zeros(net.n_gen)
    ng = len(pb.gens)
    pg[pb.gens] = z[pb.nv:pb.nv + ng]
    qg[pb.gens] = z[pb.nv + ng:]
    for g in range(net.n_gen):
        if g not in set(pb.gens.tolist()):
            gen = net.generators[g]
            pg[g] = min(max(0.0, gen.p_min), gen.p_max)
            qg[g] = min(max(0.0, gen.q_min), gen.q_max)
    return AcPoint(e, f, pg, qg, np.asarray(x, float).copy())


def best_line_heuristic(net: Network, *, workers: int = 1, seed: int = 0):
    """Best of the all-on topology and every single-line removal.

    Returns ``(topology, objective, table)`` where ``table`` maps the removed
    line index (``None`` for all-on) to its local objective.
    """
    base = solve_local(net, seed=seed)
    table = {None: base.objective if base.feasible else math.inf}
    warm = base.point if base.feasible else None
    cands = []
    for l in range(net.n_line):
        if not net.lines[l].switchable:
            continue
        x = np.ones(net.n_line)
        x[l] = 0.0
        if topology_connected(net, x):
            cands.append((l, x))

    def run(item):
        l, x = item
        r = solve_local(net, x, warm, seed=seed)
        return l, (r.objective if r.feasible else math.inf)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, cands))
    else:
        results = [run(c) for c in cands]
    table.update(dict(results))
    best_key = min(table, key=lambda k: (table[k], -1 if k is None else k))
    x = np.ones(net.n_line)
    if best_key is not None:
        x[best_key] = 0.0
    return x, table[best_key], table


def solution_to_dict(net: Network, res: LocalSolveResult) -> dict:
    """Voltages, dispatch and line flows of a local solution."""
    out = {"status": res.status, "objective": res.objective, "max_residual": res.max_residual,
           "message": res.message}
    if res.point is None:
        return out
    pt = res.point
    pij, qij, pji, qji = line_flows(net, pt.e, pt.f, pt.x)
    out["buses"] = [{"id": b.id, "e": float(pt.e[k]), "f": float(pt.f[k]),
                     "vm": float(math.hypot(pt.e[k], pt.f[k])),
                     "va_deg": float(math.degrees(math.atan2(pt.f[k], pt.e[k])))}
                    for k, b in enumerate(net.buses)]
    out["generators"] = [{"bus": net.buses[int(net.gen_bus[g])].id, "pg": float(pt.pg[g]), "qg": float(pt.qg[g])}
                         for g in range(net.n_gen)]
    out["lines"] = [{"from": ln.from_bus, "to": ln.to_bus, "on": bool(pt.x[l] > 0.5),
                     "p_from": float(pij[l]), "q_from": float(qij[l]), "p_to": float(pji[l]), "q_to": float(qji[l])}
                    for l, ln in enumerate(net.lines)]
    return out


def solution_to_json(net: Network, res: LocalSolveResult, **kw) -> str:
    return json.dumps(solution_to_dict(net, res), **kw)
