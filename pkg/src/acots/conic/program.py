"""Conic program container, options, solutions and the JSON interchange format.

Standard form (CVXOPT convention)::

    minimize    c'x + c0
    subject to  A x = b
                h - G x in K,      K = R+^l x SOC(q_1) x ... x SOC(q_k)
                lb <= x <= ub
                mat(h_j - G_j x) PSD for each PSD block j

Dual multipliers satisfy ``c + A'y + G'z + sum_j G_j' vec(Z_j) - zl + zu = 0``.

Rotated cones are expressed through a linear map into an ordinary
second-order cone by the model builder.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp

CONIC_FORMAT = "acots.conic"
CONIC_FORMAT_VERSION = 1


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    TIME_LIMIT = "time-limit"


@dataclass(frozen=True)
class PSDBlock:
    """Symmetric matrix ``W = reshape(h - G x, (dim, dim))`` constrained PSD."""
    dim: int
    G: sp.csr_matrix
    h: np.ndarray

    def value(self, x: np.ndarray) -> np.ndarray:
        w = (self.h - self.G @ x).reshape(self.dim, self.dim)
        return 0.5 * (w + w.T)


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    n_nonneg: int
    soc_dims: list[int]
    lb: np.ndarray
    ub: np.ndarray
    c0: float = 0.0
    psd: list[PSDBlock] = field(default_factory=list)
    integer: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    var_names: list[str] | None = None

    def __post_init__(self):
        n = self.c.shape[0]
        self.A = sp.csr_matrix(self.A, shape=(self.A.shape[0], n))
        self.G = sp.csr_matrix(self.G, shape=(self.G.shape[0], n))
        self.b = np.asarray(self.b, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.integer = np.asarray(self.integer, dtype=int)
        if self.A.shape[0] != self.b.shape[0] or self.G.shape[0] != self.h.shape[0]:
            raise ValueError("row dimension mismatch")
        if self.n_nonneg + sum(self.soc_dims) != self.G.shape[0]:
            raise ValueError("cone dimensions do not cover G rows")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bound dimension mismatch")
        if any(q < 1 for q in self.soc_dims):
            raise ValueError("second-order cones need dimension >= 1")
        for blk in self.psd:
            if blk.G.shape != (blk.dim * blk.dim, n):
                raise ValueError("PSD block shape mismatch")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def is_mixed_integer(self) -> bool:
        return self.integer.size > 0

    def copy(self) -> "ConicProgram":
        return replace(self, c=self.c.copy(), A=self.A.copy(), b=self.b.copy(), G=self.G.copy(),
                       h=self.h.copy(), soc_dims=list(self.soc_dims), lb=self.lb.copy(),
                       ub=self.ub.copy(), psd=list(self.psd), integer=self.integer.copy(),
                       var_names=None if self.var_names is None else list(self.var_names))

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)

    def add_inequalities(self, G_rows, h_rows) -> "ConicProgram":
        """Return a copy with extra rows ``h_rows - G_rows x >= 0`` (nonnegative cone)."""
        G_rows = sp.csr_matrix(G_rows, shape=(np.shape(h_rows)[0], self.n))
        l = self.n_nonneg
        G = sp.vstack([self.G[:l], G_rows, self.G[l:]], format="csr")
        h = np.concatenate([self.h[:l], np.asarray(h_rows, float), self.h[l:]])
        out = self.copy()
        out.G, out.h, out.n_nonneg = G, h, l + G_rows.shape[0]
        return out

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` (ignoring integrality)."""
        v = [0.0]
        if self.A.shape[0]:
            v.append(np.abs(self.A @ x - self.b).max())
        s = self.h - self.G @ x
        l = self.n_nonneg
        if l:
            v.append(max(0.0, -s[:l].min()))
        off = l
        for q in self.soc_dims:
            blk = s[off:off + q]
            v.append(max(0.0, np.linalg.norm(blk[1:]) - blk[0]))
            off += q
        v.append(max(0.0, (self.lb - x).max(initial=0.0)))
        v.append(max(0.0, (x - self.ub).max(initial=0.0)))
        for blk in self.psd:
            v.append(max(0.0, -np.linalg.eigvalsh(blk.value(x))[0]))
        return float(max(v))


@dataclass
class SolverOptions:
    feastol: float = 1e-8
    abstol: float = 1e-8
    reltol: float = 1e-8
    max_iter: int = 100
    time_limit: float = math.inf
    presolve: bool = True
    # PSD outer loop
    psd_method: str = "native"    # "native" barrier or eigenvector "outer" loop
    psd_tol: float = 1e-7
    psd_max_rounds: int = 100
    verbose: bool = False


@dataclass
class ConicSolution:
    status: Status
    x: np.ndarray
    y: np.ndarray          # equality duals (A rows)
    z: np.ndarray          # cone duals (G rows)
    objective: float
    pres: float = math.nan
    dres: float = math.nan
    gap: float = math.nan
    iterations: int = 0
    zl: np.ndarray | None = None   # lower-bound multipliers
    zu: np.ndarray | None = None   # upper-bound multipliers
    dual_objective: float = math.nan
    certificate: dict | None = None
    psd_rounds: int = 0
    message: str = ""
    psd_duals: list[np.ndarray] | None = None   # one dual matrix per PSD block

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# JSON interchange

def _sparse_to_dict(M: sp.spmatrix) -> dict:
    M = sp.coo_matrix(M)
    return {"shape": list(M.shape), "rows": M.row.tolist(), "cols": M.col.tolist(), "vals": M.data.tolist()}


def _sparse_from_dict(d: dict) -> sp.csr_matrix:
    return sp.csr_matrix((d["vals"], (d["rows"], d["cols"])), shape=tuple(d["shape"]))


def _bnd(v):
    return [None if not math.isfinite(t) else t for t in v]


def _unbnd(v, sign):
    return np.array([sign * math.inf if t is None else t for t in v], dtype=float)


def program_to_dict(p: ConicProgram) -> dict:
    return {
        "format": CONIC_FORMAT,
        "version": CONIC_FORMAT_VERSION,
        "n": p.n,
        "c": p.c.tolist(),
        "c0": p.c0,
        "A": _sparse_to_dict(p.A),
        "b": p.b.tolist(),
        "G": _sparse_to_dict(p.G),
        "h": p.h.tolist(),
        "cones": {"nonneg": p.n_nonneg, "soc": list(p.soc_dims)},
        "psd": [{"dim": blk.dim, "G": _sparse_to_dict(blk.G), "h": blk.h.tolist()} for blk in p.psd],
        "lb": _bnd(p.lb),
        "ub": _bnd(p.ub),
        "integer": p.integer.tolist(),
        "var_names": p.var_names,
    }


def program_from_dict(d: dict) -> ConicProgram:
    if d.get("format") != CONIC_FORMAT or d.get("version") != CONIC_FORMAT_VERSION:
        raise ValueError("not an acots conic program (format/version mismatch)")
    return ConicProgram(
        c=np.array(d["c"], float), A=_sparse_from_dict(d["A"]), b=np.array(d["b"], float),
        G=_sparse_from_dict(d["G"]), h=np.array(d["h"], float),
        n_nonneg=int(d["cones"]["nonneg"]), soc_dims=[int(q) for q in d["cones"]["soc"]],
        lb=_unbnd(d["lb"], -1), ub=_unbnd(d["ub"], 1), c0=float(d.get("c0", 0.0)),
        psd=[PSDBlock(int(b["dim"]), _sparse_from_dict(b["G"]), np.array(b["h"], float)) for b in d.get("psd", [])],
        integer=np.array(d.get("integer", []), dtype=int), var_names=d.get("var_names"))


def program_to_json(p: ConicProgram, **kw) -> str:
    return json.dumps(program_to_dict(p), **kw)


def program_from_json(text: str) -> ConicProgram:
    return program_from_dict(json.loads(text))
