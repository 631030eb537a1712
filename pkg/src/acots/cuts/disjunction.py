"""Cycle disjunctions and separation over the convex hull of their union.

For a cycle ``C`` the point space holds, in order, ``c_l`` and ``s_l`` of its
lines, ``x_l``, ``c_ii`` of its buses and the switched copies ``c_ii^j``,
``c_jj^i`` of each line.  Two disjuncts are modelled:

* all lines on: a PSD matrix ``W`` over ``v = [e; f]`` reproducing (c, s, c_ii),
  optionally intersected with McCormick envelopes of the bilinear cycle
  equations;
* some line off: rotated cones, McCormick rows for ``c_ii^j = c_ii x`` and
  ``sum x <= |C| - 1``.

Separation finds the l1-closest point of the hull (built by homogenizing
each disjunct) and reads the separating hyperplane off the equality duals.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..conic import SolverOptions, solve
from ..formulation import CsBounds, VariableMap
from ..modeling import Lin, Model, lin_sum
from ..netmodel import Cycle, Network
from .bilinear import cycle_bilinearize, mccormick

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-7
DEDUP_RES = 1e-9
KINDS = ("combined", "sdp", "mccormick")


@dataclass
class Cut:
    """``coef . z[indices] >= rhs`` with provenance."""
    indices: list[int]
    coef: list[float]
    rhs: float
    cycle: int = -1
    iteration: int = -1
    violation: float = 0.0

    def value(self, z: np.ndarray) -> float:
        return float(np.dot(self.coef, np.asarray(z)[self.indices]))

    def slack(self, z: np.ndarray) -> float:
        return self.value(z) - self.rhs

    def key(self) -> str:
        q = [(int(i), round(c / DEDUP_RES)) for i, c in zip(self.indices, self.coef) if abs(c) > DEDUP_RES]
        q.sort()
        payload = json.dumps([q, round(self.rhs / DEDUP_RES)])
        return hashlib.sha1(payload.encode()).hexdigest()


class CutPool:
    def __init__(self):
        self.cuts: list[Cut] = []
        self._keys: set[str] = set()

    def __len__(self):
        return len(self.cuts)

    def add(self, cut: Cut) -> bool:
        k = cut.key()
        if k in self._keys:
            return False
        self._keys.add(k)
        self.cuts.append(cut)
        return True

    def rows(self, n: int):
        """(G, h) rows in ``h - G z >= 0`` form."""
        import scipy.sparse as sp

        ri, ci, vi = [], [], []
        for r, cut in enumerate(self.cuts):
            ri += [r] * len(cut.indices)
            ci += list(cut.indices)
            vi += [-c for c in cut.coef]
        G = sp.csr_matrix((vi, (ri, ci)), shape=(len(self.cuts), n))
        h = np.array([-cut.rhs for cut in self.cuts])
        return G, h

    def to_json(self, **kw) -> str:
        return json.dumps({"format": "acots.cuts", "version": 1, "cuts": [asdict(c) for c in self.cuts]}, **kw)

    @classmethod
    def from_json(cls, text: str) -> "CutPool":
        d = json.loads(text)
        if d.get("format") != "acots.cuts":
            raise ValueError("not a cut pool")
        pool = cls()
        for c in d["cuts"]:
            pool.add(Cut(**c))
        return pool


@dataclass
class PointLayout:
    lines: list[int]
    buses: list[int]

    def names(self, net: Network) -> list[str]:
        out = [f"c{net.line_label(l)}" for l in self.lines] + [f"s{net.line_label(l)}" for l in self.lines]
        out += [f"x{net.line_label(l)}" for l in self.lines] + [f"cii[{net.buses[b].id}]" for b in self.buses]
        for l in self.lines:
            out += [f"cii{net.line_label(l)}[0]", f"cii{net.line_label(l)}[1]"]
        return out


@dataclass
class DisjunctionProgram:
    cycle: Cycle
    layout: PointLayout
    on_model: Model
    off_model: Model
    kind: str
    n_point: int
    cycle_id: int = -1
    extras: dict = field(default_factory=dict)

    def program_indices(self, vm: VariableMap) -> np.ndarray:
        return vm.point_indices(self.layout.lines, self.layout.buses)

    def hull_model(self, point: np.ndarray):
        """l1-projection model of ``point`` onto the hull; returns (model, point rows, mu row)."""
        H = Model()
        pt_terms = [[] for _ in range(self.n_point)]
        lam_terms = []
        for k, D in enumerate((self.on_model, self.off_model)):
            lam = H.add_var(f"lam{k}", 0.0)
            lam_terms.append(lam)
            vmap = D.embed_homogenized(H, lam, f"d{k}.")
            for j in range(self.n_point):
                pt_terms[j].append(vmap[j])
        obj = Lin()
        rows = []
        for j in range(self.n_point):
            rp = H.add_var(f"r+{j}", 0.0)
            rm = H.add_var(f"r-{j}", 0.0)
            rows.append(H.eq(lin_sum(pt_terms[j]) + rp - rm, float(point[j])))
            obj = obj + rp + rm
        rp = H.add_var("r+mu", 0.0)
        rm = H.add_var("r-mu", 0.0)
        mu_row = H.eq(lin_sum(lam_terms) + rp - rm, 1.0)
        H.minimize(obj + rp + rm)
        return H, rows, mu_row

    def contains(self, point, which: str, tol=1e-7, opts: SolverOptions | None = None) -> bool:
        """Membership of ``point`` in one disjunct (``"on"`` or ``"off"``), by an l1 projection."""
        D = self.on_model if which == "on" else self.off_model
        H = Model()
        one = H.add_var("one", 1.0, 1.0)
        vmap = D.embed_homogenized(H, one, "")
        obj = Lin()
        for j in range(self.n_point):
            rp = H.add_var(f"r+{j}", 0.0)
            rm = H.add_var(f"r-{j}", 0.0)
            H.eq(vmap[j] + rp - rm, float(point[j]))
            obj = obj + rp + rm
        H.minimize(obj)
        sol = solve(H.build(), opts)
        return sol.optimal and sol.objective <= tol


def _point_model(net: Network, layout: PointLayout):
    m = Model()
    L, Bs = layout.lines, layout.buses
    c = {l: m.add_var(f"c{net.line_label(l)}") for l in L}
    s = {l: m.add_var(f"s{net.line_label(l)}") for l in L}
    x = {l: m.add_var(f"x{net.line_label(l)}") for l in L}
    cii = {b: m.add_var(f"cii[{net.buses[b].id}]") for b in Bs}
    cj = {}
    for l in L:
        cj[l] = (m.add_var(f"cii{net.line_label(l)}[0]"), m.add_var(f"cii{net.line_label(l)}[1]"))
    return m, c, s, x, cii, cj


def _common_boxes(m, layout, bounds, c, s, x, cii):
    for l in layout.lines:
        m.ge(c[l] - bounds.c_lo[l] * x[l])
        m.ge(bounds.c_hi[l] * x[l] - c[l])
        m.ge(s[l] - bounds.s_lo[l] * x[l])
        m.ge(bounds.s_hi[l] * x[l] - s[l])
    for b in layout.buses:
        m.ge(cii[b] - bounds.cii_lo[b])
        m.ge(bounds.cii_hi[b] - cii[b])


def _add_mccormick(m, a, b, y, rows):
    for ka, kb, ky, r in rows:
        m.ge(ka * a + kb * b + ky * y - r)


def build_disjunction(net: Network, cycle: Cycle, bounds: CsBounds, combine_mccormick: bool = True,
                      kind: str | None = None, cycle_id: int = -1) -> DisjunctionProgram:
    """Conic descriptions of both disjuncts of ``cycle``.

    ``kind`` is ``"combined"`` (PSD and McCormick together, the default),
    ``"sdp"`` (PSD only; same as ``combine_mccormick=False``) or
    ``"mccormick"`` (McCormick only).
    """
    kind = kind or ("combined" if combine_mccormick else "sdp")
    if kind not in KINDS:
        raise ValueError(f"unknown disjunction kind {kind!r}")
    ends = net.line_ends
    layout = PointLayout(list(cycle.lines), list(cycle.buses))
    k = len(layout.lines)
    pos = {b: t for t, b in enumerate(layout.buses)}
    nb = len(layout.buses)

    # --- all lines on
    on, c, s, x, cii, cj = _point_model(net, layout)
    n_point = on.n
    _common_boxes(on, layout, bounds, c, s, x, cii)
    for l in layout.lines:
        on.eq(x[l], 1.0)
        i, j = int(ends[l, 0]), int(ends[l, 1])
        on.eq(cj[l][0] - cii[i])
        on.eq(cj[l][1] - cii[j])
    extras = {}
    if kind in ("combined", "sdp"):
        d = 2 * nb
        W = [[None] * d for _ in range(d)]
        for a in range(d):
            for b in range(a, d):
                W[a][b] = W[b][a] = on.add_var(f"W[{a},{b}]")
        for bus in layout.buses:
            t = pos[bus]
            on.eq(cii[bus] - W[t][t] - W[t + nb][t + nb])
        for l in layout.lines:
            i, j = pos[int(ends[l, 0])], pos[int(ends[l, 1])]
            on.eq(c[l] - W[i][j] - W[i + nb][j + nb])
            on.eq(s[l] - W[i][j + nb] + W[j][i + nb])
        on.psd(W)
        extras["W_dim"] = d
    if kind in ("combined", "mccormick"):
        if k >= 3:
            system = cycle_bilinearize(net, cycle)
            sym = {}
            box = {}
            for l in layout.lines:
                sym[("c", l)], box[("c", l)] = c[l], (bounds.c_lo[l], bounds.c_hi[l])
                sym[("s", l)], box[("s", l)] = s[l], (bounds.s_lo[l], bounds.s_hi[l])
            for b in layout.buses:
                sym[("cii", b)], box[("cii", b)] = cii[b], (bounds.cii_lo[b], bounds.cii_hi[b])
            for t, bnd in enumerate(system.chord_bounds):
                sym[("ct", t)] = on.add_var(f"ct[{t}]", -bnd, bnd)
                sym[("st", t)] = on.add_var(f"st[{t}]", -bnd, bnd)
                box[("ct", t)] = box[("st", t)] = (-bnd, bnd)
            y = {}
            for u, v in system.products():
                yv = on.add_var(f"y[{u}*{v}]")
                y[(u, v)] = yv
                (alo, ahi), (blo, bhi) = box[u], box[v]
                _add_mccormick(on, sym[u], sym[v], yv, mccormick(alo, ahi, blo, bhi))
            for eq in system.equations:
                on.eq(lin_sum(kc * y[tuple(sorted((u, v)))] for kc, u, v in eq))
            extras["bilinear"] = system
        else:
            # two parallel lines between the same buses carry identical (c, s)
            l1, l2 = layout.lines
            same = ends[l1, 0] == ends[l2, 0]
            on.eq(c[l1] - c[l2])
            on.eq(s[l1] - (s[l2] if same else -s[l2]))

    # --- some line off
    off, c0, s0, x0, cii0, cj0 = _point_model(net, layout)
    _common_boxes(off, layout, bounds, c0, s0, x0, cii0)
    for l in layout.lines:
        off.ge(x0[l])
        off.ge(1.0 - x0[l])
        off.rsoc(cj0[l][0], cj0[l][1], [c0[l], s0[l]])
        for end, bus in enumerate((int(ends[l, 0]), int(ends[l, 1]))):
            v = cj0[l][end]
            lo, hi = bounds.cii_lo[bus], bounds.cii_hi[bus]
            off.ge(v - lo * x0[l])
            off.ge(hi * x0[l] - v)
            off.ge(v - cii0[bus] + hi * (1.0 - x0[l]))
            off.ge(cii0[bus] - lo * (1.0 - x0[l]) - v)
    off.ge(k - 1.0 - lin_sum(x0[l] for l in layout.lines))
    return DisjunctionProgram(cycle, layout, on, off, kind, n_point, cycle_id, extras)


def separate(point: np.ndarray, disj: DisjunctionProgram, opts: SolverOptions | None = None,
             tol: float = VIOLATION_TOL) -> tuple[np.ndarray, float, float] | None:
    """Separating hyperplane ``alpha . z >= beta`` for ``point``, or ``None``.

    Returns ``(alpha, beta, violation)`` in the cycle's point coordinates with
    ``max|alpha| <= 1`` and ``|beta| <= 1``.
    """
    point = np.asarray(point, float)
    if point.shape != (disj.n_point,) or not np.all(np.isfinite(point)):
        raise ValueError("point does not match the disjunction layout")
    H, rows, mu_row = disj.hull_model(point)
    prog = H.build()
    sol = solve(prog, opts or SolverOptions())
    if not sol.optimal:
        log.warning("separation for cycle %s failed: %s", disj.cycle_id, sol.message)
        return None
    alpha = sol.y[rows].copy()
    beta = -float(sol.y[mu_row])
    scale = max(1.0, np.abs(alpha).max(initial=0.0), abs(beta))
    alpha /= scale
    beta /= scale
    viol = beta - float(alpha @ point)
    if viol <= tol:
        return None
    return alpha, beta, viol


def separate_cut(point, disj: DisjunctionProgram, vm: VariableMap, iteration: int = -1,
                 opts: SolverOptions | None = None) -> Cut | None:
    """:func:`separate` mapped onto program variable indices."""
    res = separate(point, disj, opts)
    if res is None:
        return None
    alpha, beta, viol = res
    idx = disj.program_indices(vm)
    keep = np.abs(alpha) > 1e-12
    return Cut([int(i) for i in idx[keep]], [float(a) for a in alpha[keep]], float(beta),
               disj.cycle_id, iteration, float(viol))


def rank_one_point(net: Network, disj: DisjunctionProgram, e: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Point of the all-on disjunct induced by bus voltages (indexed by internal bus)."""
    ends = net.line_ends
    L, B = disj.layout.lines, disj.layout.buses
    cv = [e[ends[l, 0]] * e[ends[l, 1]] + f[ends[l, 0]] * f[ends[l, 1]] for l in L]
    sv = [e[ends[l, 0]] * f[ends[l, 1]] - e[ends[l, 1]] * f[ends[l, 0]] for l in L]
    cii = e ** 2 + f ** 2
    out = cv + sv + [1.0] * len(L) + [cii[b] for b in B]
    for l in L:
        out += [cii[ends[l, 0]], cii[ends[l, 1]]]
    return np.array(out)
