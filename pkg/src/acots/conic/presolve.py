"""Presolve with dual postsolve.

Reductions (applied until a fixed point):

* variables fixed by their bounds are substituted out;
* singleton equality rows fix their variable;
* singleton inequality rows become variable bounds;
* pairs of opposite inequality rows with matching right-hand sides become
  equalities;
* empty rows and cone blocks that became constant are dropped after a
  feasibility check;
* variables that no longer appear anywhere are set to their best bound.

Every reduction is recorded so that primal values and all row multipliers of
the original program can be reconstructed from the reduced solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cones import smat, svec_pairs, svec_size
from .program import ConicProgram

FIX_TOL = 1e-11
FEAS_TOL = 1e-9


class PresolveInfeasible(Exception):
    pass


class PresolveUnbounded(Exception):
    pass


@dataclass
class Reduction:
    """Reduced program plus the information needed to undo it."""
    program: ConicProgram
    orig: ConicProgram
    keep_cols: np.ndarray
    x_fixed: np.ndarray                     # values for all original columns (nan where free)
    eq_rows: list[tuple[str, int]]          # reduced eq row -> ("eq", r) or ("pair", p)
    nn_rows: list[tuple[str, int]]          # reduced nonneg row -> ("g", r) or ("lb"/"ub", j)
    soc_rows: np.ndarray                    # reduced soc rows -> original G row
    pairs: list[tuple[int, int, float]]     # (r1, r2, kappa) with g2 = -kappa g1
    lb_src: dict[int, tuple[int, float]]    # var -> (orig G row, |coef|) for row-derived bounds
    ub_src: dict[int, tuple[int, float]]
    events: list[tuple] = field(default_factory=list)
    # semidefinite blocks in svec form: reduced rows, rhs, dims, original block ids
    psd_G: sp.csr_matrix | None = None
    psd_h: np.ndarray | None = None
    psd_dims: list[int] = field(default_factory=list)
    psd_blocks: list[int] = field(default_factory=list)

    def psd_duals(self, zr_psd: np.ndarray) -> list[np.ndarray]:
        """Dual matrices of all original PSD blocks (zero for dropped ones)."""
        out = [np.zeros((blk.dim, blk.dim)) for blk in self.orig.psd]
        off = 0
        for k, d in zip(self.psd_blocks, self.psd_dims):
            t = svec_size(d)
            out[k] = smat(zr_psd[off:off + t], d)
            off += t
        return out

    # -- postsolve ----------------------------------------------------------
    def primal(self, xr: np.ndarray) -> np.ndarray:
        x = self.x_fixed.copy()
        x[self.keep_cols] = xr
        return x

    def duals(self, yr: np.ndarray, zr: np.ndarray, zr_psd: np.ndarray | None = None, *,
              ray: bool = False):
        """Multipliers ``(y, z, zl, zu)`` of the original rows and bounds.

        ``zr_psd`` are the reduced semidefinite duals; they enter the
        stationarity used to recover multipliers of eliminated columns.
        With ``ray`` the objective is dropped, which maps a Farkas ray of
        the reduced program to one of the original program.
        """
        p = self.orig
        cvec = np.zeros(p.n) if ray else p.c
        y = np.zeros(p.A.shape[0])
        z = np.zeros(p.G.shape[0])
        zl = np.zeros(p.n)
        zu = np.zeros(p.n)
        for k, (kind, r) in enumerate(self.eq_rows):
            if kind == "eq":
                y[r] = yr[k]
            else:
                r1, r2, kappa = self.pairs[r]
                if yr[k] >= 0:
                    z[r1] = yr[k]
                else:
                    z[r2] = -yr[k] / kappa
        for k, (kind, j) in enumerate(self.nn_rows):
            if kind == "g":
                z[j] = zr[k]
            else:
                self._bound_dual(kind, j, zr[k], z, zl, zu)
        l = len(self.nn_rows)
        z[self.soc_rows] = zr[l:]
        AT = p.A.T.tocsr()
        GT = p.G.T.tocsr()
        extra = np.zeros(p.n)
        if p.psd and zr_psd is not None:
            for blk, Z in zip(p.psd, self.psd_duals(zr_psd)):
                extra += blk.G.T @ Z.ravel()
        for ev in reversed(self.events):
            kind, j = ev[0], ev[1]
            rho = float(cvec[j] + (AT[j] @ y)[0] + (GT[j] @ z)[0] + extra[j] - zl[j] + zu[j])
            if kind == "eqfix":
                r, a = ev[2], ev[3]
                y[r] = -rho / a
            else:  # fixed through bounds or an empty column
                if rho >= 0:
                    self._bound_dual("lb", j, rho, z, zl, zu)
                else:
                    self._bound_dual("ub", j, -rho, z, zl, zu)
        return y, z, zl, zu

    def _bound_dual(self, kind, j, val, z, zl, zu):
        src = (self.lb_src if kind == "lb" else self.ub_src).get(j)
        if src is None:
            (zl if kind == "lb" else zu)[j] += val
        else:
            r, g = src
            z[r] += val / g


def _row_lists(M: sp.csr_matrix):
    M = sp.csr_matrix(M, copy=True)  # never touch the caller's arrays
    M.eliminate_zeros()
    return [(M.indices[M.indptr[i]:M.indptr[i + 1]].copy(), M.data[M.indptr[i]:M.indptr[i + 1]].copy())
            for i in range(M.shape[0])]


def psd_svec_rows(blk) -> tuple[sp.csr_matrix, np.ndarray]:
    """Rows ``(G, h)`` with ``svec(W) = h - G x`` for a PSD block."""
    d = blk.dim
    i, j = svec_pairs(d)
    w = np.where(i == j, 1.0, np.sqrt(2.0))
    a, b = i * d + j, j * d + i
    G = blk.G.tocsr()
    Gs = sp.diags(0.5 * w) @ (G[a] + G[b])
    return sp.csr_matrix(Gs), 0.5 * w * (blk.h[a] + blk.h[b])


def presolve(p: ConicProgram, reduce: bool = True) -> Reduction:
    """Reduce ``p``.  With ``reduce=False`` only the bounds become rows.

    PSD blocks are carried along in svec form (``Reduction.psd_G``/``psd_h``).
    """
    n = p.n
    lb, ub = p.lb.copy(), p.ub.copy()
    c = p.c.copy()
    xfix = np.full(n, np.nan)
    lb_src: dict[int, tuple[int, float]] = {}
    ub_src: dict[int, tuple[int, float]] = {}
    events: list[tuple] = []

    # rows as (cols, vals, rhs); constants move into rhs as variables get fixed
    eq = {r: [*cv, p.b[r]] for r, cv in enumerate(_row_lists(p.A))}
    G_rows = _row_lists(p.G)
    l = p.n_nonneg
    nn = {r: [G_rows[r][0], G_rows[r][1], p.h[r]] for r in range(l)}
    soc_blocks = []
    off = l
    for q in p.soc_dims:
        soc_blocks.append(list(range(off, off + q)))
        off += q
    soc_h = p.h.copy()
    soc_rows = {r: [G_rows[r][0], G_rows[r][1]] for r in range(l, p.G.shape[0])}
    psd_list = [psd_svec_rows(blk) for blk in p.psd]
    psd_h = np.concatenate([hh for _, hh in psd_list]) if psd_list else np.zeros(0)
    psd_rows = dict(enumerate(_row_lists(sp.vstack([g for g, _ in psd_list], format="csr")))) if psd_list else {}
    psd_rows = {r: list(v) for r, v in psd_rows.items()}
    psd_blocks = []
    off = 0
    for k, blk in enumerate(p.psd):
        t = svec_size(blk.dim)
        psd_blocks.append((k, blk.dim, list(range(off, off + t))))
        off += t
    pairs: list[tuple[int, int, float]] = []
    pair_rows: dict[int, list] = {}  # pair id -> [cols, vals, rhs]

    col_rows_cache = None

    def fix(j, v):
        if v < lb[j] - 1e-7 * max(1.0, abs(v)) or v > ub[j] + 1e-7 * max(1.0, abs(v)):
            raise PresolveInfeasible(f"fixing x[{j}]={v} violates bounds")
        xfix[j] = v

    def substitute(rowdict, hvec=None):
        for r, row in rowdict.items():
            cols, vals = row[0], row[1]
            if cols.size == 0:
                continue
            m = ~np.isnan(xfix[cols])
            if m.any():
                delta = float(vals[m] @ xfix[cols[m]])
                if hvec is not None:
                    hvec[r] -= delta
                else:
                    row[2] -= delta
                row[0], row[1] = cols[~m], vals[~m]

    changed = reduce
    while changed:
        changed = False
        # 1. bounds that pin a variable
        free = np.isnan(xfix)
        if np.any(free & (ub < lb - 1e-9 * np.maximum(1.0, np.abs(lb)))):
            raise PresolveInfeasible("crossing bounds")
        pin = np.where(free & np.isfinite(lb) & np.isfinite(ub)
                       & (ub - lb <= FIX_TOL * np.maximum(1.0, np.abs(lb))))[0]
        for j in pin:
            fix(j, 0.5 * (lb[j] + ub[j]))
            events.append(("bndfix", int(j)))
            changed = True
        # 2. substitute fixed columns everywhere
        for d in (eq, nn, pair_rows):
            substitute(d)
        substitute(soc_rows, soc_h)
        substitute(psd_rows, psd_h)
        # 3. equality rows
        for r in list(eq):
            cols, vals, rhs = eq[r]
            if cols.size == 0:
                if abs(rhs) > FEAS_TOL * max(1.0, abs(rhs)) * 10:
                    raise PresolveInfeasible(f"empty equality row {r} with rhs {rhs}")
                del eq[r]
                changed = True
            elif cols.size == 1:
                j, a = int(cols[0]), float(vals[0])
                if np.isnan(xfix[j]) and abs(a) > 1e-12:
                    fix(j, rhs / a)
                    events.append(("eqfix", j, r, a))
                    del eq[r]
                    changed = True
        for pid in list(pair_rows):
            cols, vals, rhs = pair_rows[pid]
            if cols.size == 0:
                if abs(rhs) > 1e-8 * max(1.0, abs(rhs)):
                    raise PresolveInfeasible("empty merged equality")
                del pair_rows[pid]
                changed = True
        # 4. nonnegative rows
        for r in list(nn):
            cols, vals, rhs = nn[r]
            if cols.size == 0:
                if rhs < -FEAS_TOL * 10 * max(1.0, abs(rhs)):
                    raise PresolveInfeasible(f"empty inequality row {r} with rhs {rhs}")
                del nn[r]
                changed = True
            elif cols.size == 1:
                j, g = int(cols[0]), float(vals[0])
                if not np.isnan(xfix[j]):
                    continue
                bnd = rhs / g
                if g > 0:
                    if bnd < ub[j]:
                        ub[j] = bnd
                        ub_src[j] = (r, abs(g))
                else:
                    if bnd > lb[j]:
                        lb[j] = bnd
                        lb_src[j] = (r, abs(g))
                del nn[r]
                changed = True
        # 5. opposite pairs -> equalities
        seen: dict[tuple, tuple[int, float, float]] = {}
        for r in sorted(nn):
            cols, vals, rhs = nn[r]
            if cols.size < 2:
                continue
            order = np.argsort(cols)
            cs, vs = cols[order], vals[order]
            scale = vs[np.argmax(np.abs(vs))]
            sgn = 1.0 if vs[0] > 0 else -1.0
            mag = abs(scale)
            key = (tuple(cs.tolist()), tuple(np.round(sgn * vs / mag, 11).tolist()))
            if key in seen:
                r0, sgn0, mag0 = seen[key]
                if sgn0 != sgn:
                    # rows: h0 - g0 x >= 0 and h - g x >= 0 with g = -kappa g0
                    h0n, hn = nn[r0][2] / mag0, rhs / mag
                    gap = h0n + hn
                    if gap < -1e-9:
                        raise PresolveInfeasible(f"rows {r0},{r} are contradictory")
                    if gap <= 1e-11:
                        kappa = mag / mag0
                        pid = len(pairs)
                        pairs.append((r0, r, kappa))
                        pair_rows[pid] = [nn[r0][0], nn[r0][1], nn[r0][2]]
                        del nn[r0], nn[r]
                        del seen[key]
                        changed = True
                continue
            seen[key] = (r, sgn, mag)
        # 6. constant soc blocks
        keep_blocks = []
        for blk in soc_blocks:
            if all(soc_rows[r][0].size == 0 for r in blk):
                v = soc_h[blk]
                if np.linalg.norm(v[1:]) - v[0] > 1e-8 * max(1.0, abs(v[0])):
                    raise PresolveInfeasible("constant cone block outside its cone")
                for r in blk:
                    del soc_rows[r]
                changed = True
            else:
                keep_blocks.append(blk)
        soc_blocks = keep_blocks
        keep_psd = []
        for k, d, blk in psd_blocks:
            if all(psd_rows[r][0].size == 0 for r in blk):
                if np.linalg.eigvalsh(smat(psd_h[blk], d))[0] < -1e-8 * max(1.0, np.abs(psd_h[blk]).max()):
                    raise PresolveInfeasible("constant PSD block is not semidefinite")
                for r in blk:
                    del psd_rows[r]
                changed = True
            else:
                keep_psd.append((k, d, blk))
        psd_blocks = keep_psd
        # 7. columns that no longer appear anywhere
        if not changed:
            used = np.zeros(n, bool)
            for d in (eq, nn, pair_rows, soc_rows, psd_rows):
                for row in d.values():
                    used[row[0]] = True
            for j in np.where(np.isnan(xfix) & ~used)[0]:
                if c[j] > 0:
                    v = lb[j]
                elif c[j] < 0:
                    v = ub[j]
                else:
                    v = min(max(0.0, lb[j]), ub[j])
                if not math.isfinite(v):
                    raise PresolveUnbounded(f"x[{j}] unbounded along its cost")
                fix(j, v)
                events.append(("colfix", int(j)))
                changed = True

    keep = np.where(np.isnan(xfix))[0]
    colmap = -np.ones(n, dtype=int)
    colmap[keep] = np.arange(keep.size)
    nk = keep.size

    def assemble(rows):
        ri, ci, vi = [], [], []
        for k, (cols, vals) in enumerate(rows):
            ri.append(np.full(cols.size, k))
            ci.append(colmap[cols])
            vi.append(vals)
        if not rows:
            return sp.csr_matrix((0, nk))
        return sp.csr_matrix((np.concatenate(vi), (np.concatenate(ri), np.concatenate(ci))), shape=(len(rows), nk))

    eq_map: list[tuple[str, int]] = []
    eq_list, b_list = [], []
    for r in sorted(eq):
        eq_map.append(("eq", r))
        eq_list.append((eq[r][0], eq[r][1]))
        b_list.append(eq[r][2])
    for pid in sorted(pair_rows):
        eq_map.append(("pair", pid))
        eq_list.append((pair_rows[pid][0], pair_rows[pid][1]))
        b_list.append(pair_rows[pid][2])

    nn_map: list[tuple[str, int]] = []
    g_list, h_list = [], []
    for r in sorted(nn):
        nn_map.append(("g", r))
        g_list.append((nn[r][0], nn[r][1]))
        h_list.append(nn[r][2])
    one = np.ones(1)
    for j in keep:
        if math.isfinite(lb[j]):
            nn_map.append(("lb", int(j)))
            g_list.append((np.array([j]), -one))
            h_list.append(-lb[j])
        if math.isfinite(ub[j]):
            nn_map.append(("ub", int(j)))
            g_list.append((np.array([j]), one))
            h_list.append(ub[j])
    soc_order = [r for blk in soc_blocks for r in blk]
    g_list += [(soc_rows[r][0], soc_rows[r][1]) for r in soc_order]
    h_list += [soc_h[r] for r in soc_order]

    red = ConicProgram(
        c=c[keep], A=assemble(eq_list), b=np.array(b_list, float), G=assemble(g_list),
        h=np.array(h_list, float), n_nonneg=len(nn_map), soc_dims=[len(b) for b in soc_blocks],
        lb=np.full(nk, -np.inf), ub=np.full(nk, np.inf),
        c0=p.c0 + float(np.nansum(c * np.where(np.isnan(xfix), 0.0, xfix))))
    psd_order = [r for _, _, blk in psd_blocks for r in blk]
    return Reduction(red, p, keep, xfix, eq_map, nn_map, np.array(soc_order, dtype=int), pairs,
                     lb_src, ub_src, events,
                     psd_G=assemble([(psd_rows[r][0], psd_rows[r][1]) for r in psd_order]),
                     psd_h=psd_h[psd_order], psd_dims=[d for _, d, _ in psd_blocks],
                     psd_blocks=[k for k, _, _ in psd_blocks])
