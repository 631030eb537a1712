"""Best-first branch-and-bound over the binary variables of a mixed-integer conic program.

Each node fixes a subset of binaries through their variable bounds and
solves the continuous conic relaxation.  Integral relaxation solutions are
collected in a :class:`SolutionPool`; the best one is the incumbent.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram, SolverOptions, Status, solve
from .formulation import MIConicProgram

log = logging.getLogger(__name__)

INT_TOL = 1e-6


@dataclass
class BnbOptions:
    gap: float = 1e-4                 # relative optimality gap
    time_limit: float = 720.0
    int_tol: float = INT_TOL
    pool_cap: int = 50
    dive_every: int = 10              # start a depth-first dive every k nodes
    node_limit: int | None = None
    conic: SolverOptions = field(default_factory=SolverOptions)
    log_file: IO[str] | None = None   # JSON-lines search log


@dataclass(order=True)
class BnbNode:
    lb: float
    seq: int
    depth: int = field(compare=False)
    lo: np.ndarray = field(compare=False, repr=False)
    hi: np.ndarray = field(compare=False, repr=False)
    parent_lb: float = field(compare=False, default=-math.inf)

    @property
    def fixing(self) -> dict[int, int]:
        """Binaries fixed at this node (position in the binary list -> value)."""
        return {k: int(self.lo[k]) for k in np.where(self.lo == self.hi)[0]}


class SolutionPool:
    """Distinct integral binary vectors with their relaxation objectives.

    When more than ``cap`` solutions are offered the worst ones are dropped.
    """

    def __init__(self, cap: int = 50):
        self.cap = cap
        self._items: dict[tuple, float] = {}
        self._full: dict[tuple, np.ndarray] = {}

    def __len__(self):
        return len(self._items)

    def __contains__(self, x) -> bool:
        return self._key(x) in self._items

    @staticmethod
    def _key(x) -> tuple:
        return tuple(int(v) for v in np.rint(np.asarray(x, float)))

    def add(self, x, objective: float, full: np.ndarray | None = None) -> bool:
        x = np.asarray(x, float)
        if np.abs(x - np.rint(x)).max(initial=0.0) > INT_TOL:
            raise ValueError("pool members must be integral")
        key = self._key(x)
        if key in self._items:
            if objective < self._items[key]:
                self._items[key] = objective
                if full is not None:
                    self._full[key] = full
            return False
        self._items[key] = float(objective)
        if full is not None:
            self._full[key] = full
        if len(self._items) > self.cap:
            worst = max(self._items, key=self._items.get)
            del self._items[worst]
            self._full.pop(worst, None)
            return worst != key
        return True

    def members(self) -> list[tuple[np.ndarray, float]]:
        """Pool entries sorted by objective."""
        return [(np.array(k, dtype=float), v) for k, v in sorted(self._items.items(), key=lambda kv: kv[1])]

    def solution(self, x) -> np.ndarray | None:
        return self._full.get(self._key(x))


@dataclass
class BnbResult:
    status: str                  # optimal | infeasible | time-limit | node-limit
    x: np.ndarray | None         # full variable vector of the incumbent
    objective: float             # incumbent objective (inf if none)
    lb: float                    # valid lower bound on the MI optimum
    pool: SolutionPool
    nodes: int = 0
    elapsed: float = 0.0
    lb_history: list[float] = field(default_factory=list)
    x_binary: np.ndarray | None = None   # incumbent binaries, rounded

    @property
    def gap(self) -> float:
        if not math.isfinite(self.objective):
            return math.inf
        return (self.objective - self.lb) / max(abs(self.objective), 1e-10)


def add_no_good(mi: MIConicProgram, xstar) -> MIConicProgram:
    """Exclude ``xstar``: ``sum_{x*=1} (1 - x) + sum_{x*=0} x >= 1``."""
    xstar = np.rint(np.asarray(xstar, float)).astype(int)
    if xstar.size != mi.binaries.size or np.any((xstar != 0) & (xstar != 1)):
        raise ValueError("no-good cuts need a binary vector over all binaries")
    coef = np.where(xstar == 1, 1.0, -1.0)
    row = sp.csr_matrix((coef, (np.zeros(coef.size, int), mi.binaries)), shape=(1, mi.program.n))
    return mi.with_rows(row, [float(xstar.sum() - 1)])


def no_good_row(mi: MIConicProgram, xstar) -> tuple[np.ndarray, float]:
    """Dense (coefficients over binaries, rhs) form of the no-good row ``a x <= rhs``."""
    xstar = np.rint(np.asarray(xstar, float))
    return np.where(xstar == 1, 1.0, -1.0), float(xstar.sum() - 1)


def _as_mi(prog) -> MIConicProgram:
    if isinstance(prog, MIConicProgram):
        return prog
    if isinstance(prog, ConicProgram):
        return MIConicProgram(prog, np.asarray(prog.integer, dtype=int))
    raise TypeError("expected a ConicProgram or MIConicProgram")


class _Search:
    def __init__(self, mi: MIConicProgram, opts: BnbOptions):
        self.mi = mi
        self.opts = opts
        self.base = mi.program.copy()
        self.base.integer = np.zeros(0, dtype=int)
        self.bins = np.asarray(mi.binaries, dtype=int)
        lo = np.clip(np.ceil(self.base.lb[self.bins] - opts.int_tol), 0, 1)
        hi = np.clip(np.floor(self.base.ub[self.bins] + opts.int_tol), 0, 1)
        self.lo0, self.hi0 = lo, hi
        self.pool = SolutionPool(opts.pool_cap)
        self.ub = math.inf
        self.best = None
        self.heap: list[BnbNode] = []
        self.seq = itertools.count()
        self.nodes = 0
        self.t0 = time.perf_counter()
        self.unresolved_lb = math.inf   # parent bounds of leaves the solver could not settle
        self.lb_hist: list[float] = []

    # -- bookkeeping -------------------------------------------------------
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def emit(self, **rec):
        if self.opts.log_file is not None:
            rec["t"] = round(self.elapsed(), 6)
            self.opts.log_file.write(json.dumps(rec) + "\n")

    def global_lb(self) -> float:
        cands = [self.ub, self.unresolved_lb]
        if self.heap:
            cands.append(self.heap[0].lb)
        lb = min(cands)
        if self.lb_hist and lb < self.lb_hist[-1]:
            lb = self.lb_hist[-1]
        return lb

    def gap_closed(self) -> bool:
        if not math.isfinite(self.ub):
            return False
        lb = self.global_lb()
        return self.ub - lb <= self.opts.gap * max(abs(self.ub), 1e-10)

    # -- node processing ---------------------------------------------------
    def relax(self, lo, hi):
        p = self.base.copy()
        p.lb[self.bins] = np.maximum(p.lb[self.bins], lo)
        p.ub[self.bins] = np.minimum(p.ub[self.bins], hi)
        return solve(p, self.opts.conic)

    def offer(self, xfull: np.ndarray, obj: float):
        xb = np.rint(xfull[self.bins])
        self.pool.add(xb, obj, xfull)
        if obj < self.ub:
            self.ub = obj
            self.best = xfull.copy()
            self.emit(event="incumbent", objective=obj, nodes=self.nodes)

    def branch_var(self, xfull: np.ndarray) -> int | None:
        xb = xfull[self.bins]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        frac = np.where(self.lo_cur == self.hi_cur, 0.0, frac)
        if frac.max(initial=0.0) <= self.opts.int_tol:
            return None
        best = frac.max()
        cand = np.where(frac >= best - 1e-9)[0]
        if cand.size > 1 and self.mi.flow_pairs is not None:
            fp = self.mi.flow_pairs[cand]          # (k, 2, 2) indices of (p, q)
            flow = np.hypot(xfull[fp[..., 0]], xfull[fp[..., 1]]).max(axis=1)
            top = flow.max()
            cand = cand[flow >= top - 1e-9]
        return int(cand.min())

    def process(self, node: BnbNode):
        """Solve a node; return children (preferred first) or an empty list."""
        self.nodes += 1
        self.lo_cur, self.hi_cur = node.lo, node.hi
        sol = self.relax(node.lo, node.hi)
        if sol.status is Status.INFEASIBLE:
            self.emit(event="node", id=node.seq, depth=node.depth, status="infeasible")
            return []
        if not sol.optimal:
            # no trustworthy bound: branch on the parent's bound if possible
            free = np.where(node.lo != node.hi)[0]
            self.emit(event="node", id=node.seq, depth=node.depth, status=sol.status.value)
            if free.size == 0:
                self.unresolved_lb = min(self.unresolved_lb, node.parent_lb)
                log.warning("leaf relaxation failed (%s); keeping parent bound", sol.message)
                return []
            k = int(free[0])
            return self.children(node, k, 0.5, node.parent_lb)
        bound = sol.objective
        if math.isfinite(sol.dual_objective):
            bound = min(bound, sol.dual_objective)
        lb = max(bound, node.parent_lb)
        self.emit(event="node", id=node.seq, depth=node.depth, status="optimal", lb=lb,
                  objective=sol.objective, incumbent=self.ub)
        if lb >= self.ub - self.opts.gap * max(abs(self.ub), 1e-10) and math.isfinite(self.ub):
            xb = sol.x[self.bins]
            if np.abs(xb - np.rint(xb)).max(initial=0.0) <= self.opts.int_tol:
                self.pool.add(np.rint(xb), sol.objective, sol.x)
            return []
        k = self.branch_var(sol.x)
        if k is None:
            self.offer(sol.x, sol.objective)
            return []
        return self.children(node, k, float(sol.x[self.bins[k]]), lb)

    def children(self, node: BnbNode, k: int, val: float, lb: float):
        out = []
        for v in ((1, 0) if val >= 0.5 else (0, 1)):
            lo, hi = node.lo.copy(), node.hi.copy()
            lo[k] = hi[k] = v
            out.append(BnbNode(lb, next(self.seq), node.depth + 1, lo, hi, lb))
        return out

    def out_of_time(self) -> bool:
        return self.elapsed() >= self.opts.time_limit

    def run(self) -> BnbResult:
        root = BnbNode(-math.inf, next(self.seq), 0, self.lo0, self.hi0)
        if np.any(self.lo0 > self.hi0):
            return self.result("infeasible")
        kids = self.process(root)
        if not kids and not math.isfinite(self.ub) and self.unresolved_lb == math.inf:
            return self.result("infeasible")
        for c in kids:
            heapq.heappush(self.heap, c)
        self.lb_hist.append(self.global_lb())
        status = "optimal"
        while self.heap:
            if self.gap_closed():
                break
            if self.out_of_time():
                status = "time-limit"
                break
            if self.opts.node_limit is not None and self.nodes >= self.opts.node_limit:
                status = "node-limit"
                break
            node = heapq.heappop(self.heap)
            if math.isfinite(self.ub) and node.lb >= self.ub - self.opts.gap * max(abs(self.ub), 1e-10):
                continue
            dive = self.opts.dive_every > 0 and self.nodes % self.opts.dive_every == 0
            while node is not None:
                kids = self.process(node)
                node = None
                if kids:
                    if dive and not self.out_of_time():
                        node = kids[0]
                        kids = kids[1:]
                    for c in kids:
                        heapq.heappush(self.heap, c)
            self.lb_hist.append(self.global_lb())
        if status == "optimal" and not math.isfinite(self.ub):
            status = "infeasible" if self.unresolved_lb == math.inf else "optimal"
        return self.result(status)

    def result(self, status: str) -> BnbResult:
        # inherited parent bounds can exceed the incumbent by solver noise
        lb = min(self.global_lb(), self.ub) if status != "infeasible" else math.inf
        self.emit(event="done", status=status, lb=lb, incumbent=self.ub, nodes=self.nodes)
        xb = None if self.best is None else np.rint(self.best[self.bins])
        return BnbResult(status, self.best, self.ub, lb, self.pool, self.nodes, self.elapsed(),
                         list(self.lb_hist), xb)


def solve_mi(prog, opts: BnbOptions | None = None) -> BnbResult:
    """Branch-and-bound on the binaries of ``prog``.

    The returned ``lb`` is a valid lower bound whatever the termination
    reason: the smallest bound among open nodes, the incumbent and leaves the
    conic solver could not settle.
    """
    mi = _as_mi(prog)
    opts = opts or BnbOptions()
    return _Search(mi, opts).run()
