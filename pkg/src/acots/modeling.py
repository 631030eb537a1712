"""A small algebraic layer for building conic programs.

Linear expressions are sparse maps from variable index to coefficient plus a
constant.  Constraints are collected by cone type and assembled into a
:class:`~acots.conic.ConicProgram`.  A model can be embedded into another one
in homogenized form (all constants multiplied by a scaling variable), which is
how disjunctive hulls are built.
"""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
import scipy.sparse as sp

from .conic.program import ConicProgram, PSDBlock


class Lin:
    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def of(v) -> "Lin":
        if isinstance(v, Lin):
            return v
        return Lin(const=float(v))

    def copy(self) -> "Lin":
        return Lin(self.terms, self.const)

    def __add__(self, other):
        o = Lin.of(other)
        out = self.copy()
        for k, v in o.terms.items():
            out.terms[k] = out.terms.get(k, 0.0) + v
        out.const += o.const
        return out

    __radd__ = __add__

    def __neg__(self):
        return Lin({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-Lin.of(other))

    def __rsub__(self, other):
        return Lin.of(other) + (-self)

    def __mul__(self, a):
        if isinstance(a, Lin):
            if a.terms and self.terms:
                raise TypeError("product of two affine expressions is not affine")
            if not a.terms:
                a = a.const
            else:
                return a * self.const
        a = float(a)
        return Lin({k: a * v for k, v in self.terms.items()}, a * self.const)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def __repr__(self):
        t = " + ".join(f"{v:g}*x{k}" for k, v in sorted(self.terms.items()))
        return f"Lin({t or '0'} + {self.const:g})"


class Var:
    """Handle to a block of model variables (indexable, gives :class:`Lin`)."""

    def __init__(self, index: np.ndarray):
        self.index = np.asarray(index, dtype=int)

    def __getitem__(self, k) -> Lin:
        i = self.index[k]
        if np.ndim(i):
            raise IndexError("scalar index expected")
        return Lin({int(i): 1.0})

    def __len__(self):
        return len(self.index)

    def __iter__(self):
        for k in range(len(self.index)):
            yield self[k]


def lin_sum(items) -> Lin:
    out = Lin()
    for it in items:
        it = Lin.of(it)
        for k, v in it.terms.items():
            out.terms[k] = out.terms.get(k, 0.0) + v
        out.const += it.const
    return out


class Model:
    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[int] = []
        self.eqs: list[Lin] = []
        self.eq_tags: list[object] = []
        self.ineqs: list[Lin] = []      # expr >= 0
        self.ineq_tags: list[object] = []
        self.socs: list[list[Lin]] = []  # [t, u1, ..., uk] : |u| <= t
        self.psds: list[list[list[Lin]]] = []
        self.obj = Lin()

    # -- variables ----------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.names)

    def add_var(self, name: str, lb=-math.inf, ub=math.inf, integer=False) -> Lin:
        i = self.n
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        if integer:
            self.integer.append(i)
        return Lin({i: 1.0})

    def add_vars(self, name: str, k: int, lb=-math.inf, ub=math.inf, integer=False) -> Var:
        lb = np.broadcast_to(np.asarray(lb, float), (k,))
        ub = np.broadcast_to(np.asarray(ub, float), (k,))
        start = self.n
        for j in range(k):
            self.add_var(f"{name}[{j}]", lb[j], ub[j], integer)
        return Var(np.arange(start, start + k))

    def index(self, v: Lin) -> int:
        """Variable index of a single-variable expression."""
        if len(v.terms) != 1 or v.const != 0.0:
            raise ValueError("not a plain variable")
        (k, a), = v.terms.items()
        if a != 1.0:
            raise ValueError("not a plain variable")
        return k

    # -- constraints --------------------------------------------------------
    def eq(self, lhs, rhs=0.0, tag=None):
        self.eqs.append(Lin.of(lhs) - rhs)
        self.eq_tags.append(tag)
        return len(self.eqs) - 1

    def ge(self, lhs, rhs=0.0, tag=None):
        self.ineqs.append(Lin.of(lhs) - rhs)
        self.ineq_tags.append(tag)
        return len(self.ineqs) - 1

    def le(self, lhs, rhs=0.0, tag=None):
        return self.ge(Lin.of(rhs) - lhs, 0.0, tag)

    def soc(self, t, us):
        """``||us|| <= t``."""
        self.socs.append([Lin.of(t)] + [Lin.of(u) for u in us])

    def rsoc(self, w, z, us):
        """``sum(u^2) <= w z`` with ``w, z >= 0``."""
        w, z = Lin.of(w), Lin.of(z)
        self.socs.append([w + z] + [2.0 * Lin.of(u) for u in us] + [w - z])

    def psd(self, mat):
        d = len(mat)
        self.psds.append([[Lin.of(mat[i][j]) for j in range(d)] for i in range(d)])

    def minimize(self, expr):
        self.obj = Lin.of(expr)

    # -- assembly -----------------------------------------------------------
    @staticmethod
    def _rows(exprs, n, sign):
        ri, ci, vi = [], [], []
        const = np.zeros(len(exprs))
        for r, e in enumerate(exprs):
            for k, v in e.terms.items():
                ri.append(r)
                ci.append(k)
                vi.append(sign * v)
            const[r] = e.const
        M = sp.csr_matrix((vi, (ri, ci)), shape=(len(exprs), n))
        return M, const

    def build(self) -> ConicProgram:
        n = self.n
        A, bc = self._rows(self.eqs, n, 1.0)
        nn_G, nn_h = self._rows(self.ineqs, n, -1.0)
        soc_rows = [e for cone in self.socs for e in cone]
        soc_G, soc_h = self._rows(soc_rows, n, -1.0)
        G = sp.vstack([nn_G, soc_G], format="csr")
        h = np.concatenate([nn_h, soc_h])
        c = np.zeros(n)
        for k, v in self.obj.terms.items():
            c[k] += v
        psd = []
        for mat in self.psds:
            d = len(mat)
            Gm, hm = self._rows([mat[i][j] for i in range(d) for j in range(d)], n, -1.0)
            psd.append(PSDBlock(d, Gm, hm))
        return ConicProgram(c=c, A=A, b=-bc, G=G, h=h, n_nonneg=len(self.ineqs),
                            soc_dims=[len(cone) for cone in self.socs], lb=np.array(self.lb, float),
                            ub=np.array(self.ub, float), c0=self.obj.const, psd=psd,
                            integer=np.array(self.integer, dtype=int), var_names=list(self.names))

    # -- homogenized embedding ----------------------------------------------
    def embed_homogenized(self, target: "Model", lam: Lin, prefix: str) -> dict[int, Lin]:
        """Copy this model's feasible set into ``target`` scaled by ``lam``.

        Every variable gets a fresh copy ``v'`` and each constraint
        ``a'v + a0 in K`` becomes ``a'v' + a0*lam in K``; variable bounds
        become ``lb*lam <= v' <= ub*lam``.  For ``lam > 0`` the embedded set is
        ``lam`` times the original one, and for ``lam = 0`` it is its
        recession cone.  Integrality and the objective are dropped.
        """
        lam = Lin.of(lam)
        start = target.n
        vmap = {i: target.add_var(f"{prefix}{self.names[i]}") for i in range(self.n)}

        def tr(e: Lin) -> Lin:
            out = Lin({start + k: v for k, v in e.terms.items()})
            return out + e.const * lam

        for i in range(self.n):
            if math.isfinite(self.lb[i]):
                target.ge(vmap[i] - self.lb[i] * lam)
            if math.isfinite(self.ub[i]):
                target.ge(self.ub[i] * lam - vmap[i])
        for e, t in zip(self.eqs, self.eq_tags):
            target.eq(tr(e), tag=t)
        for e, t in zip(self.ineqs, self.ineq_tags):
            target.ge(tr(e), tag=t)
        for cone in self.socs:
            target.socs.append([tr(e) for e in cone])
        for mat in self.psds:
            target.psds.append([[tr(e) for e in row] for row in mat])
        return vmap


def group_tags(tags) -> dict[object, list[int]]:
    out = defaultdict(list)
    for i, t in enumerate(tags):
        if t is not None:
            out[t].append(i)
    return dict(out)
