"""Primal-dual interior point method on the homogeneous self-dual embedding.

Solves ``min c'x  s.t.  A x = b,  h - G x in K`` for K a product of a
nonnegative orthant, second-order cones and semidefinite cones (in svec form), using Nesterov-Todd scaling and
Mehrotra predictor-corrector steps.  Infeasibility and unboundedness are
detected from the embedding and reported with certificates.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeSpec, NTScaling
from .program import Status

DENSE_LIMIT = 900
STEP_FRACTION = 0.99


@dataclass
class IPMResult:
    status: Status
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    pres: float
    dres: float
    gap: float
    iterations: int
    certificate: dict | None = None
    message: str = ""


class _Scaling:
    """Ruiz equilibration that keeps a single factor per cone block."""

    def __init__(self, A, G, cone: ConeSpec, iters: int = 10):
        n = A.shape[1]
        self.D = np.ones(n)
        self.EA = np.ones(A.shape[0])
        self.EG = np.ones(G.shape[0])
        A, G = A.tocsc(), G.tocsc()
        for _ in range(iters):
            As, Gs = self._apply(A, G)
            cn = np.maximum(_col_absmax(As), _col_absmax(Gs))
            cn = np.where(cn > 0, cn, 1.0)
            ra = _row_absmax(As)
            ra = np.where(ra > 0, ra, 1.0)
            rg = _row_absmax(Gs)
            for q, idx in cone.groups:
                rg[idx] = rg[idx].max(axis=1, keepdims=True)
            for _, sl in cone.psd:
                rg[sl] = rg[sl].max(initial=0.0)
            rg = np.where(rg > 0, rg, 1.0)
            self.D /= np.sqrt(cn)
            self.EA /= np.sqrt(ra)
            self.EG /= np.sqrt(rg)
            if max(abs(1 - cn).max(initial=0), abs(1 - ra).max(initial=0), abs(1 - rg).max(initial=0)) < 0.1:
                break
        self.A, self.G = self._apply(A, G)

    def _apply(self, A, G):
        return (sp.diags(self.EA) @ A @ sp.diags(self.D)).tocsr(), (sp.diags(self.EG) @ G @ sp.diags(self.D)).tocsr()


def _col_absmax(M):
    M = abs(M).tocsc()
    return M.max(axis=0).toarray().ravel() if M.shape[0] else np.zeros(M.shape[1])


def _row_absmax(M):
    M = abs(M).tocsr()
    return M.max(axis=1).toarray().ravel() if M.shape[1] else np.zeros(M.shape[0])


class _KKT:
    """Factorization of the Newton system for a fixed scaling.

    The full system ``[[0,A',G'],[A,0,0],[G,0,-W'W]]`` is factored with a
    small static regularization and solved with iterative refinement against
    the unregularized matrix.
    """

    def __init__(self, A, G, W2: sp.csr_matrix, reg: float):
        n, p, m = A.shape[1], A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        self.K0 = sp.bmat([[sp.csr_matrix((n, n)), A.T, G.T], [A, None, None], [G, None, -W2]],
                          format="csr")
        diag = np.concatenate([np.full(n, reg), np.full(p, -reg), np.zeros(m)])
        K = (self.K0 + sp.diags(diag)).tocsc()
        if n + p + m <= DENSE_LIMIT:
            lu = sla.lu_factor(K.toarray(), check_finite=False)
            self._solve = lambda r: sla.lu_solve(lu, r, check_finite=False)
        else:
            lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
            self._solve = lu.solve

    def solve(self, r1, r2, r3):
        rhs = np.concatenate([r1, r2, r3])
        sol = self._solve(rhs)
        tol = 1e-14 * (1.0 + np.abs(rhs).max(initial=0.0))
        for _ in range(5):
            res = rhs - self.K0 @ sol
            if np.abs(res).max(initial=0.0) <= tol:
                break
            sol = sol + self._solve(res)
        n, p = self.n, self.p
        return sol[:n], sol[n:n + p], sol[n + p:]


def solve_ipm(c, A, b, G, h, n_nonneg, soc_dims, psd_dims=(), **kw) -> IPMResult:
    """Homogeneous self-dual interior point for ``min c'x, Ax = b, h - Gx in K``.

    Diverging iterates on hard instances are reported through the status, so
    floating-point warnings are silenced here.
    """
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return _solve_ipm(c, A, b, G, h, n_nonneg, soc_dims, psd_dims, **kw)


def _solve_ipm(c, A, b, G, h, n_nonneg, soc_dims, psd_dims=(), *, feastol=1e-8, abstol=1e-8, reltol=1e-8,
               max_iter=100, time_limit=math.inf, verbose=False) -> IPMResult:
    t_start = time.monotonic()
    c = np.asarray(c, float)
    b = np.asarray(b, float)
    h = np.asarray(h, float)
    A = sp.csr_matrix(A)
    G = sp.csr_matrix(G)
    n, p = c.size, b.size
    if G.shape[0] == 0:
        # a trivially satisfied row gives the embedding a cone to work with
        G = sp.csr_matrix((1, n))
        h = np.ones(1)
        n_nonneg = 1
        soc_dims = []
        psd_dims = []
        dummy = True
    else:
        dummy = False
    cone = ConeSpec(n_nonneg, soc_dims, psd_dims)
    m = cone.m

    sc = _Scaling(A, G, cone)
    As, Gs = sc.A, sc.G
    cs, bs, hs = sc.D * c, sc.EA * b, sc.EG * h
    c_scale = max(1.0, np.abs(cs).max(initial=0.0))
    b_scale = max(1.0, np.abs(bs).max(initial=0.0), np.abs(hs).max(initial=0.0))
    cs, bs, hs = cs / c_scale, bs / b_scale, hs / b_scale

    def unscale(x, y, z, s):
        return (sc.D * x * b_scale, sc.EA * y * c_scale, sc.EG * z * c_scale, s / sc.EG * b_scale)

    nb, nh, nc = max(1.0, np.linalg.norm(b)), max(1.0, np.linalg.norm(h)), max(1.0, np.linalg.norm(c))

    def residuals(x, y, z, s, tau, kappa):
        xu, yu, zu, su = unscale(x, y, z, s)
        rA = np.linalg.norm(A @ xu - b * tau) if p else 0.0
        rG = np.linalg.norm(G @ xu + su - h * tau)
        rd = np.linalg.norm(A.T @ yu + G.T @ zu + c * tau)
        return xu, yu, zu, su, rA, rG, rd

    # --- initial point
    reg = 1e-8
    eye = sp.identity(m, format="csr")
    kkt = _KKT(As, Gs, eye, reg)
    x, _, zt = kkt.solve(np.zeros(n), bs, hs)
    s = -zt
    a = cone.min_eig(s)
    if a <= 0:
        s = s + (1.0 - a) * cone.e
    _, y, z = kkt.solve(-cs, np.zeros(p), np.zeros(m))
    a = cone.min_eig(z)
    if a <= 0:
        z = z + (1.0 - a) * cone.e
    tau, kappa = 1.0, 1.0

    best = None
    status, message, cert = Status.ITERATION_LIMIT, "iteration limit", None
    it = 0
    last = None
    for it in range(max_iter + 1):
        # --- residuals and termination
        rx = -(As.T @ y + Gs.T @ z + cs * tau)
        ry = As @ x - bs * tau
        rz = s + Gs @ x - hs * tau
        cx, by_hz = float(cs @ x), float(bs @ y + hs @ z)
        rt = kappa + cx + by_hz
        mu = (float(s @ z) + tau * kappa) / (cone.degree + 1)

        xu, yu, zu, su, rA, rG, rd = residuals(x, y, z, s, tau, kappa)
        pres = max(rA / nb, rG / nh) / tau
        dres = rd / nc / tau
        gap = float(su @ zu) / tau ** 2
        pcost = float(c @ xu) / tau
        dcost = -float(b @ yu + h @ zu) / tau
        if pcost < 0:
            relgap = gap / max(-pcost, 1e-300)
        elif dcost > 0:
            relgap = gap / dcost
        else:
            relgap = math.inf
        last = (xu / tau, yu / tau, zu / tau, su / tau, pres, dres, gap)
        score = max(pres / feastol, dres / feastol, min(gap / abstol, relgap / reltol))
        if best is None or score < best[0]:
            best = (score, last)
        if verbose:
            print(f"{it:3d} pcost {pcost:+.6e} dcost {dcost:+.6e} gap {gap:.1e} pres {pres:.1e} "
                  f"dres {dres:.1e} k/t {kappa / tau:.1e}")
        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            status, message = Status.OPTIMAL, "optimal"
            break
        # infeasibility certificates
        if by_hz < 0:
            hy = -(b @ yu + h @ zu)
            if np.linalg.norm(A.T @ yu + G.T @ zu) / nc <= feastol * hy:
                status, message = Status.INFEASIBLE, "primal infeasible"
                cert = {"y": (yu / hy).tolist(), "z": (zu / hy).tolist()}
                break
        if cx < 0:
            cxu = -float(c @ xu)
            if max(np.linalg.norm(A @ xu) / nb, np.linalg.norm(G @ xu + su) / nh) <= feastol * cxu:
                status, message = Status.UNBOUNDED, "dual infeasible"
                cert = {"x": (xu / cxu).tolist()}
                break
        if it == max_iter:
            break
        if time.monotonic() - t_start > time_limit:
            status, message = Status.TIME_LIMIT, "time limit"
            break

        # --- Newton steps
        try:
            W = NTScaling(cone, s, z)
            lam = W.lam
            kkt = _KKT(As, Gs, W.gram(), reg)
            x1, y1, z1 = kkt.solve(-cs, bs, hs)
            denom1 = kappa / tau - (cs @ x1 + bs @ y1 + hs @ z1)

            def direction(eta, d_s, d_k):
                x2, y2, z2 = kkt.solve(eta * rx, -eta * ry,
                                       -eta * rz - W.apply(cone.circ_solve(lam, d_s), transpose=True))
                # sign conventions: rx = -(A'y+G'z+c tau), ry = A x - b tau, rz = s + G x - h tau
                dtau = (eta * rt + cs @ x2 + bs @ y2 + hs @ z2 + d_k / tau) / denom1
                dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
                ds = W.apply(cone.circ_solve(lam, d_s) - W.apply(dz), transpose=True)
                dk = (d_k - kappa * dtau) / tau
                return dx, dy, dz, ds, dtau, dk

            def max_step(ds, dz, dtau, dk):
                a = min(cone.step_to_boundary(s, ds), cone.step_to_boundary(z, dz))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dk < 0:
                    a = min(a, -kappa / dk)
                return a

            lam2 = cone.circ(lam, lam)
            aff = direction(1.0, -lam2, -kappa * tau)
            a_aff = min(1.0, max_step(aff[3], aff[2], aff[4], aff[5]))
            sigma = min(1.0, max(0.0, (1.0 - a_aff) ** 3))
            dsa_s = W.apply(aff[3], inverse=True, transpose=True)
            dza_s = W.apply(aff[2])
            d_s = -lam2 - cone.circ(dsa_s, dza_s) + sigma * mu * cone.e
            d_k = -kappa * tau - aff[5] * aff[4] + sigma * mu
            dx, dy, dz, ds, dtau, dk = direction(1.0 - sigma, d_s, d_k)
            alpha = min(1.0, STEP_FRACTION * max_step(ds, dz, dtau, dk))
        except (np.linalg.LinAlgError, RuntimeError, ValueError, FloatingPointError) as exc:
            message = f"numerical failure: {exc}"
            break
        if not np.isfinite(alpha) or alpha < 1e-10 or not np.all(np.isfinite(dx)):
            message = "step length too small"
            break
        x, y, z, s = x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * ds
        tau, kappa = tau + alpha * dtau, kappa + alpha * dk

    if status is Status.OPTIMAL or status in (Status.INFEASIBLE, Status.UNBOUNDED):
        xo, yo, zo, so, pres, dres, gap = last
    else:
        score, (xo, yo, zo, so, pres, dres, gap) = best
        if score <= 100.0:
            status, message = Status.OPTIMAL, "optimal (reduced accuracy)"
    if dummy:
        zo, so = zo[:0], so[:0]
    if status in (Status.INFEASIBLE, Status.UNBOUNDED):
        nanx = np.full(n, np.nan)
        return IPMResult(status, nanx, np.full(p, np.nan), np.full(zo.size, np.nan), np.full(zo.size, np.nan),
                         pres, dres, gap, it, cert, message)
    return IPMResult(status, xo, yo, zo, so, pres, dres, gap, it, None, message)
