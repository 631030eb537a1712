"""Vectorized operations on products of nonnegative orthants, second-order
cones and positive semidefinite cones.

Second-order cones of equal dimension are grouped so that Nesterov-Todd
scalings, Jordan products and step lengths are computed with array ops.
Semidefinite blocks are stored as ``svec`` (lower triangle, off-diagonal
entries times sqrt(2)) and handled one block at a time.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


SQRT2 = np.sqrt(2.0)


def svec_size(d: int) -> int:
    return d * (d + 1) // 2


def svec_pairs(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column index of each svec entry (lower triangle, column-major)."""
    i, j = np.tril_indices(d)
    order = np.lexsort((i, j))
    return i[order], j[order]


def svec(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    i, j = svec_pairs(d)
    return M[i, j] * np.where(i == j, 1.0, SQRT2)


def smat(v: np.ndarray, d: int) -> np.ndarray:
    i, j = svec_pairs(d)
    vals = v / np.where(i == j, 1.0, SQRT2)
    M = np.zeros((d, d))
    M[i, j] = vals
    M[j, i] = vals
    return M


class ConeSpec:
    def __init__(self, n_nonneg: int, soc_dims: list[int], psd_dims: list[int] = ()):
        self.l = int(n_nonneg)
        self.soc_dims = list(soc_dims)
        self.psd_dims = list(psd_dims)
        n_soc = self.l + sum(self.soc_dims)
        self.psd = []   # (dim, slice)
        off = n_soc
        for d in self.psd_dims:
            self.psd.append((d, slice(off, off + svec_size(d))))
            off += svec_size(d)
        self.m = off
        self.degree = self.l + len(self.soc_dims) + sum(self.psd_dims)
        starts = np.cumsum([self.l] + self.soc_dims[:-1]) if self.soc_dims else np.zeros(0, int)
        by_dim: dict[int, list[int]] = {}
        for st, q in zip(starts, self.soc_dims):
            by_dim.setdefault(q, []).append(int(st))
        # each group: (dim, index matrix k x dim)
        self.groups = [(q, np.asarray(st)[:, None] + np.arange(q)[None, :]) for q, st in sorted(by_dim.items())]
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for q, idx in self.groups:
            e[idx[:, 0]] = 1.0
        for d, sl in self.psd:
            e[sl] = svec(np.eye(d))
        self.e = e

    # -- basic algebra ------------------------------------------------------
    def min_eig(self, v: np.ndarray) -> float:
        out = [np.inf]
        if self.l:
            out.append(v[: self.l].min())
        for q, idx in self.groups:
            blk = v[idx]
            out.append((blk[:, 0] - np.linalg.norm(blk[:, 1:], axis=1)).min())
        for d, sl in self.psd:
            out.append(np.linalg.eigvalsh(smat(v[sl], d))[0])
        return float(min(out))

    def circ(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v."""
        w = np.empty_like(u)
        w[: self.l] = u[: self.l] * v[: self.l]
        for q, idx in self.groups:
            U, V = u[idx], v[idx]
            W = np.empty_like(U)
            W[:, 0] = (U * V).sum(axis=1)
            W[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
            w[idx] = W
        for d, sl in self.psd:
            Um, Vm = smat(u[sl], d), smat(v[sl], d)
            P = Um @ Vm
            w[sl] = svec(0.5 * (P + P.T))
        return w

    def circ_solve(self, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Solve lam o u = v for u."""
        u = np.empty_like(v)
        u[: self.l] = v[: self.l] / lam[: self.l]
        for q, idx in self.groups:
            L, V = lam[idx], v[idx]
            l0 = L[:, 0]
            det = l0 * l0 - (L[:, 1:] ** 2).sum(axis=1)
            u0 = (l0 * V[:, 0] - (L[:, 1:] * V[:, 1:]).sum(axis=1)) / det
            U = np.empty_like(V)
            U[:, 0] = u0
            U[:, 1:] = (V[:, 1:] - u0[:, None] * L[:, 1:]) / l0[:, None]
            u[idx] = U
        for d, sl in self.psd:
            # lam is diagonal in the scaled coordinates
            ld = np.diag(smat(lam[sl], d))
            u[sl] = svec(2.0 * smat(v[sl], d) / (ld[:, None] + ld[None, :]))
        return u

    def step_to_boundary(self, x: np.ndarray, d_vec: np.ndarray) -> float:
        """Largest alpha with x + alpha d in K (x interior); inf if unbounded."""
        amax = np.inf
        if self.l:
            dl = d_vec[: self.l]
            neg = dl < 0
            if neg.any():
                amax = min(amax, float((-x[: self.l][neg] / dl[neg]).min()))
        for q, idx in self.groups:
            X, D = x[idx], d_vec[idx]
            nx1 = np.linalg.norm(X[:, 1:], axis=1)
            a = D[:, 0] ** 2 - (D[:, 1:] ** 2).sum(axis=1)
            b = 2.0 * (X[:, 0] * D[:, 0] - (X[:, 1:] * D[:, 1:]).sum(axis=1))
            c = np.maximum((X[:, 0] - nx1) * (X[:, 0] + nx1), 0.0)
            alpha = np.full(len(a), np.inf)
            disc = b * b - 4 * a * c
            real = disc >= 0
            sq = np.sqrt(np.where(real, disc, 0.0))
            qq = -0.5 * (b + np.where(b >= 0, sq, -sq))
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = np.where(a != 0, qq / a, np.inf)
                r2 = np.where(qq != 0, c / qq, np.inf)
            for r in (r1, r2):
                ok = real & (r > 0) & np.isfinite(r)
                alpha = np.where(ok, np.minimum(alpha, r), alpha)
            # the apex direction case: c == 0 and direction leaves immediately
            amax = min(amax, float(alpha.min()) if alpha.size else np.inf)
        for d, sl in self.psd:
            L = np.linalg.cholesky(smat(x[sl], d))
            Y = np.linalg.solve(L, np.linalg.solve(L, smat(d_vec[sl], d)).T)
            mu = np.linalg.eigvalsh(0.5 * (Y + Y.T))[0]
            if mu < 0:
                amax = min(amax, -1.0 / mu)
        return amax


def _soc_norm(X):
    """sqrt(x0^2 - |x1|^2), computed as a product to limit cancellation."""
    n1 = np.linalg.norm(X[:, 1:], axis=1)
    return np.sqrt(np.maximum((X[:, 0] - n1) * (X[:, 0] + n1), 1e-300))


class NTScaling:
    """Nesterov-Todd scaling with ``W z = W^{-T} s = lambda``.

    W is symmetric on the orthant and the second-order cones.  On a
    semidefinite block it acts as ``Z -> R' Z R`` with ``R`` chosen so that
    ``lambda`` is diagonal.
    """

    def __init__(self, cone: ConeSpec, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        l = cone.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.soc = []
        for q, idx in cone.groups:
            S, Z = s[idx], z[idx]
            sn = _soc_norm(S)
            zn = _soc_norm(Z)
            Sb, Zb = S / sn[:, None], Z / zn[:, None]
            gamma = np.sqrt(np.maximum((1.0 + (Sb * Zb).sum(axis=1)) / 2.0, 1e-300))
            Wb = np.empty_like(Sb)
            Wb[:, 0] = (Sb[:, 0] + Zb[:, 0]) / (2 * gamma)
            Wb[:, 1:] = (Sb[:, 1:] - Zb[:, 1:]) / (2 * gamma)[:, None]
            eta = np.sqrt(sn / zn)
            self.soc.append((q, idx, Wb, eta))
        self.psd = []
        lam_psd = []
        for d, sl in cone.psd:
            L1 = np.linalg.cholesky(smat(s[sl], d))
            L2 = np.linalg.cholesky(smat(z[sl], d))
            U, sig, Vt = np.linalg.svd(L2.T @ L1)
            isq = 1.0 / np.sqrt(sig)
            R = L1 @ Vt.T * isq[None, :]
            Rinv = isq[:, None] * (U.T @ L2.T)
            self.psd.append((d, sl, R, Rinv))
            lam_psd.append((sl, svec(np.diag(sig))))
        self.lam = self.apply(z)
        for sl, v in lam_psd:
            self.lam[sl] = v

    def apply(self, v: np.ndarray, inverse: bool = False, transpose: bool = False) -> np.ndarray:
        """``W v``; ``inverse`` and ``transpose`` select ``W^{-1}``, ``W'`` or ``W^{-T}``."""
        out = np.empty_like(v)
        l = self.cone.l
        out[:l] = v[:l] / self.d if inverse else v[:l] * self.d
        sgn = -1.0 if inverse else 1.0
        for q, idx, Wb, eta in self.soc:
            V = v[idx]
            w0, w1 = Wb[:, 0], Wb[:, 1:]
            t = (w1 * V[:, 1:]).sum(axis=1)
            R = np.empty_like(V)
            R[:, 0] = w0 * V[:, 0] + sgn * t
            R[:, 1:] = V[:, 1:] + (t / (1.0 + w0) + sgn * V[:, 0])[:, None] * w1
            scale = 1.0 / eta if inverse else eta
            out[idx] = R * scale[:, None]
        for d, sl, R, Rinv in self.psd:
            M = Rinv if inverse else R
            if transpose:
                M = M.T
            out[sl] = svec(M.T @ smat(v[sl], d) @ M)
        return out

    def gram(self) -> sp.csr_matrix:
        """Sparse block-diagonal ``W' W``."""
        l = self.cone.l
        rows = [np.arange(l)]
        cols = [np.arange(l)]
        vals = [self.d ** 2]
        for q, idx, Wb, eta in self.soc:
            k = len(eta)
            w0, w1 = Wb[:, 0], Wb[:, 1:]
            M = np.empty((k, q, q))
            M[:, 0, 0] = w0
            M[:, 0, 1:] = w1
            M[:, 1:, 0] = w1
            M[:, 1:, 1:] = np.eye(q - 1)[None] + w1[:, :, None] * w1[:, None, :] / (1.0 + w0)[:, None, None]
            M *= eta[:, None, None]
            M = M @ M
            rows.append(np.repeat(idx, q, axis=1).ravel())
            cols.append(np.tile(idx, (1, q)).ravel())
            vals.append(M.ravel())
        for d, sl, R, Rinv in self.psd:
            P = R @ R.T
            t = svec_size(d)
            M = np.column_stack([svec(P @ smat(e, d) @ P) for e in np.eye(t)])
            idx = np.arange(sl.start, sl.stop)
            rows.append(np.repeat(idx, t))
            cols.append(np.tile(idx, t))
            vals.append(M.ravel())
        m = self.cone.m
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
