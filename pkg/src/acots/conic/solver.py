"""Solver front end: presolve, interior point core, postsolve, PSD outer loop."""
from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np
import scipy.sparse as sp

from .ipm import solve_ipm
from .presolve import PresolveInfeasible, PresolveUnbounded, presolve
from .program import ConicProgram, ConicSolution, SolverOptions, Status


def _nan_solution(p: ConicProgram, status: Status, message: str, cert=None) -> ConicSolution:
    return ConicSolution(status, np.full(p.n, np.nan), np.full(p.A.shape[0], np.nan),
                         np.full(p.G.shape[0], np.nan),
                         math.inf if status is Status.INFEASIBLE else -math.inf if status is Status.UNBOUNDED else math.nan,
                         certificate=cert, message=message)


def dual_objective(p: ConicProgram, y, z, zl, zu, psd_duals=None) -> float:
    val = p.c0 - float(p.b @ y) - float(p.h @ z)
    for blk, Z in zip(p.psd, psd_duals or []):
        val -= float(blk.h @ Z.ravel())
    fl, fu = np.isfinite(p.lb), np.isfinite(p.ub)
    val += float(p.lb[fl] @ zl[fl]) - float(p.ub[fu] @ zu[fu])
    return val


def farkas_residual(p: ConicProgram, cert: dict) -> tuple[float, float]:
    """``(||A'y + G'z + sum G_k'Z_k - zl + zu||_inf, b'y + h'z + ... )`` of a certificate.

    A valid infeasibility certificate has a zero first entry, dual cone
    membership of its multipliers and a negative second entry (the solver
    normalizes it to -1).
    """
    y, z = np.asarray(cert["y"]), np.asarray(cert["z"])
    zl = np.asarray(cert.get("zl", np.zeros(p.n)))
    zu = np.asarray(cert.get("zu", np.zeros(p.n)))
    r = p.A.T @ y + p.G.T @ z - zl + zu
    val = float(p.b @ y + p.h @ z)
    for blk, Z in zip(p.psd, cert.get("psd", [])):
        r = r + blk.G.T @ Z.ravel()
        val += float(blk.h @ Z.ravel())
    fl, fu = np.isfinite(p.lb), np.isfinite(p.ub)
    val += -float(p.lb[fl] @ zl[fl]) + float(p.ub[fu] @ zu[fu])
    return float(np.abs(r).max(initial=0.0)), val


def _solve_direct(p: ConicProgram, opts: SolverOptions) -> ConicSolution:
    try:
        red = presolve(p, reduce=opts.presolve)
    except PresolveInfeasible as exc:
        if opts.presolve:
            # let the interior point produce a Farkas ray for the unreduced program
            sol = _solve_direct(p, replace(opts, presolve=False))
            if sol.status is Status.INFEASIBLE:
                sol.message = f"presolve: {exc}"
                return sol
        return _nan_solution(p, Status.INFEASIBLE, f"presolve: {exc}")
    except PresolveUnbounded as exc:
        return _nan_solution(p, Status.UNBOUNDED, f"presolve: {exc}")
    q = red.program
    G, h = q.G, q.h
    if red.psd_dims:
        G = sp.vstack([G, red.psd_G], format="csr")
        h = np.concatenate([h, red.psd_h])
    res = solve_ipm(q.c, q.A, q.b, G, h, q.n_nonneg, q.soc_dims, red.psd_dims, feastol=opts.feastol,
                    abstol=opts.abstol, reltol=opts.reltol, max_iter=opts.max_iter,
                    time_limit=opts.time_limit, verbose=opts.verbose)
    if res.status is Status.INFEASIBLE and res.certificate is not None:
        m = q.G.shape[0]
        zc = np.asarray(res.certificate["z"])
        y, z, zl, zu = red.duals(np.asarray(res.certificate["y"]), zc[:m], zc[m:], ray=True)
        cert = {"y": y, "z": z, "zl": zl, "zu": zu}
        if p.psd:
            cert["psd"] = red.psd_duals(zc[m:])
        return _nan_solution(p, res.status, res.message, cert)
    if res.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return _nan_solution(p, res.status, res.message, res.certificate)
    m = q.G.shape[0]
    x = red.primal(res.x)
    zp = res.z[m:]
    y, z, zl, zu = red.duals(res.y, res.z[:m], zp)
    Z = red.psd_duals(zp) if p.psd else None
    return ConicSolution(res.status, x, y, z, p.objective(x), res.pres, res.dres, res.gap, res.iterations,
                         zl, zu, dual_objective(p, y, z, zl, zu, Z), None, 0, res.message, Z)


def psd_initial_rows(blk):
    """Diagonal nonnegativity rows and 2x2-minor cones implied by ``blk`` PSD.

    Returns ``(G_nn, h_nn, G_soc, h_soc)`` where every consecutive triple of
    SOC rows is one cone ``||(2 w_ij, w_ii - w_jj)|| <= w_ii + w_jj``.
    """
    d = blk.dim
    G, h = blk.G.tocsr(), blk.h

    def entry(i, j):
        if i == j:
            return G[i * d + i], h[i * d + i]
        return 0.5 * (G[i * d + j] + G[j * d + i]), 0.5 * (h[i * d + j] + h[j * d + i])

    Gd, hd = zip(*[entry(i, i) for i in range(d)])
    soc_G, soc_h = [], []
    for i in range(d):
        for j in range(i + 1, d):
            gij, hij = entry(i, j)
            soc_G += [Gd[i] + Gd[j], 2 * gij, Gd[i] - Gd[j]]
            soc_h += [hd[i] + hd[j], 2 * hij, hd[i] - hd[j]]
    n = G.shape[1]
    G_nn = sp.vstack(Gd, format="csr")
    G_soc = sp.vstack(soc_G, format="csr") if soc_G else sp.csr_matrix((0, n))
    return G_nn, np.array(hd), G_soc, np.array(soc_h)


def psd_outer_loop(p: ConicProgram, opts: SolverOptions) -> ConicSolution:
    """Solve a program with PSD blocks by cutting-plane outer approximation.

    Each block starts as its diagonal and 2x2 principal minor cones; then
    ``v' W v >= 0`` is added for every eigenvector with a negative eigenvalue
    until the smallest eigenvalue of each block is at least ``-psd_tol``.
    Since each intermediate problem relaxes the PSD one, its optimal value is
    a valid lower bound at every round.
    """
    t0 = time.monotonic()
    base_nn, base_soc = [], []
    for blk in p.psd:
        G_nn, h_nn, G_soc, h_soc = psd_initial_rows(blk)
        base_nn.append((G_nn, h_nn))
        base_soc.append((G_soc, h_soc))
    cuts_G: list[sp.csr_matrix] = []
    cuts_h: list[float] = []
    l0, m0 = p.n_nonneg, p.G.shape[0]
    sol = None
    for rnd in range(1, opts.psd_max_rounds + 1):
        nn_G = [p.G[:l0]] + [g for g, _ in base_nn] + cuts_G
        nn_h = [p.h[:l0]] + [hh for _, hh in base_nn] + [np.array(cuts_h)]
        soc_G = [p.G[l0:]] + [g for g, _ in base_soc]
        soc_h = [p.h[l0:]] + [hh for _, hh in base_soc]
        G = sp.vstack(nn_G + soc_G, format="csr")
        h = np.concatenate(nn_h + soc_h)
        n_nn = sum(g.shape[0] for g in nn_G)
        soc_dims = list(p.soc_dims) + [3] * sum(g.shape[0] // 3 for g, _ in base_soc)
        q = ConicProgram(p.c, p.A, p.b, G, h, n_nn, soc_dims, p.lb, p.ub, p.c0)
        o = SolverOptions(**{**opts.__dict__})
        o.time_limit = max(0.0, opts.time_limit - (time.monotonic() - t0))
        sol = _solve_direct(q, o)
        if not sol.optimal:
            break
        new = 0
        for blk in p.psd:
            w, V = np.linalg.eigh(blk.value(sol.x))
            for k in np.where(w < -opts.psd_tol)[0]:
                v = V[:, k]
                vv = np.kron(v, v)
                cuts_G.append(sp.csr_matrix(vv @ blk.G))
                cuts_h.append(float(vv @ blk.h))
                new += 1
        if new == 0:
            break
        if time.monotonic() - t0 > opts.time_limit:
            sol.status, sol.message = Status.TIME_LIMIT, "time limit in PSD outer loop"
            break
    else:
        sol.status, sol.message = Status.ITERATION_LIMIT, "PSD outer loop round limit"
    # keep duals of the original rows only
    nz = sol.z
    sol.z = np.concatenate([nz[:l0], nz[n_nn:n_nn + (m0 - l0)]])
    sol.psd_rounds = rnd
    return sol


def solve(p: ConicProgram, opts: SolverOptions | None = None) -> ConicSolution:
    """Solve the continuous relaxation of ``p`` (integrality is ignored).

    PSD blocks use the semidefinite barrier unless ``opts.psd_method`` is
    ``"outer"``.
    """
    opts = opts or SolverOptions()
    if p.psd and opts.psd_method == "outer":
        return psd_outer_loop(p, opts)
    if opts.psd_method not in ("native", "outer"):
        raise ValueError(f"unknown psd_method {opts.psd_method!r}")
    return _solve_direct(p, opts)
