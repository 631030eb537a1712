"""Adapter to the Clarabel solver, used as an independent reference."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .program import ConicProgram, ConicSolution, SolverOptions, Status


def available() -> bool:
    try:
        import clarabel  # noqa: F401
    except ImportError:
        return False
    return True


def _svec_rows(blk):
    """Rows of the scaled upper-triangle vectorization of ``h - G x``."""
    d = blk.dim
    G = blk.G.tocsr()
    rows, hs = [], []
    r2 = math.sqrt(2.0)
    for j in range(d):
        for i in range(j + 1):
            if i == j:
                rows.append(G[i * d + i])
                hs.append(blk.h[i * d + i])
            else:
                rows.append(r2 * 0.5 * (G[i * d + j] + G[j * d + i]))
                hs.append(r2 * 0.5 * (blk.h[i * d + j] + blk.h[j * d + i]))
    return sp.vstack(rows, format="csr"), np.array(hs)


def solve_reference(p: ConicProgram, opts: SolverOptions | None = None) -> ConicSolution:
    import clarabel

    opts = opts or SolverOptions()
    n = p.n
    fl, fu = np.where(np.isfinite(p.lb))[0], np.where(np.isfinite(p.ub))[0]
    Lb = sp.csr_matrix((-np.ones(fl.size), (np.arange(fl.size), fl)), shape=(fl.size, n))
    Ub = sp.csr_matrix((np.ones(fu.size), (np.arange(fu.size), fu)), shape=(fu.size, n))
    l = p.n_nonneg
    blocks = [p.A, p.G[:l], Lb, Ub, p.G[l:]]
    rhs = [p.b, p.h[:l], -p.lb[fl], p.ub[fu], p.h[l:]]
    cones = []
    if p.A.shape[0]:
        cones.append(clarabel.ZeroConeT(p.A.shape[0]))
    n_nn = l + fl.size + fu.size
    if n_nn:
        cones.append(clarabel.NonnegativeConeT(n_nn))
    cones += [clarabel.SecondOrderConeT(q) for q in p.soc_dims]
    for blk in p.psd:
        Gs, hs = _svec_rows(blk)
        blocks.append(Gs)
        rhs.append(hs)
        cones.append(clarabel.PSDTriangleConeT(blk.dim))
    A = sp.vstack(blocks, format="csc")
    b = np.concatenate(rhs)
    P = sp.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.tol_feas = opts.feastol
    settings.tol_gap_abs = opts.abstol
    settings.tol_gap_rel = opts.reltol
    settings.max_iter = max(opts.max_iter, 200)
    if math.isfinite(opts.time_limit):
        settings.time_limit = opts.time_limit
    res = clarabel.DefaultSolver(P, p.c, A, b, cones, settings).solve()
    st = str(res.status)
    x = np.array(res.x)
    zall = np.array(res.z)
    if "Infeasible" in st and "Dual" not in st:
        status = Status.INFEASIBLE
    elif "DualInfeasible" in st:
        status = Status.UNBOUNDED
    elif "Solved" in st:
        status = Status.OPTIMAL
    elif "Time" in st:
        status = Status.TIME_LIMIT
    else:
        status = Status.ITERATION_LIMIT
    pe = p.A.shape[0]
    y = zall[:pe]
    z = np.concatenate([zall[pe:pe + l], zall[pe + n_nn:pe + n_nn + sum(p.soc_dims)]])
    zl = np.zeros(n)
    zu = np.zeros(n)
    zl[fl] = zall[pe + l:pe + l + fl.size]
    zu[fu] = zall[pe + l + fl.size:pe + n_nn]
    obj = p.objective(x) if status is Status.OPTIMAL else math.nan
    return ConicSolution(status, x, y, z, obj, iterations=int(res.iterations), zl=zl, zu=zu, message=st)
