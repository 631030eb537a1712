"""Two-phase optimal transmission switching run and its metrics.

Phase 0 tightens the (c, s) boxes and fixes lines whose removal the local
relaxation forbids, then solves the all-on AC OPF for the baseline.
Phase I strengthens the continuous relaxation with arctangent envelopes and
rounds of cycle disjunction cuts.  Phase II alternates mixed-integer solves,
local AC OPF evaluation of every pooled topology and no-good cuts.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import IO, Callable

import numpy as np

from .acopf import LocalSolveResult, solve_local, warm_from_relaxation
from .bnb import BnbOptions, add_no_good, solve_mi
from .conic import SolverOptions, solve
from .cuts import CutPool, build_disjunction, separate_cut, tighten_all
from .formulation import AcPoint, CsBounds, MIConicProgram, build_misocp_ots
from .netmodel import Network, cycle_basis

log = logging.getLogger(__name__)

METHODS = ("SOCP", "SOCPA", "SOCPA_Disj")
REPORT_FORMAT = "acots.report"
REPORT_VERSION = 1
REL_TOL = 1e-9

# (net, topology, warm start or None) -> objective, inf when no feasible point is found
OpfOracle = Callable[[Network, np.ndarray, "AcPoint | None"], float]


class RunError(RuntimeError):
    pass


def normalize_method(name: str) -> str:
    key = name.replace("-", "_").lower()
    for m in METHODS:
        if m.lower() == key:
            return m
    raise ValueError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")


@dataclass
class RunConfig:
    method: str = "SOCPA_Disj"
    t1: int = 5                  # cut rounds
    t2: int = 5                  # mixed-integer rounds
    epsilon: float = 0.001       # early stop when LB >= (1 - epsilon) UB
    mi_gap: float = 1e-4
    mi_time_limit: float = 720.0
    radius: int = 2
    workers: int = 1
    seed: int = 0
    tighten: bool = True
    search_log: IO[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.method = normalize_method(self.method)
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("round counts must be nonnegative")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.radius < 0 or self.workers < 1:
            raise ValueError("radius must be >= 0 and workers >= 1")

    @property
    def angles(self) -> bool:
        return self.method != "SOCP"

    @property
    def disjunctions(self) -> bool:
        return self.method == "SOCPA_Disj"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "search_log"}


@dataclass
class Round:
    t: int
    lb: float
    status: str
    nodes: int
    pool: int
    new_topologies: int
    ub: float
    seconds: float


@dataclass
class RunReport:
    case: str
    method: str
    baseline: float
    proven_lb: float
    ub: float
    topology: list[int]
    pct_og: float
    pct_cb: float
    off_count: int
    off_lines: list[str]
    phase1_lb: float
    lb_history: list[float]
    rounds: list[Round]
    cut_counts: list[int]
    fixed_on: list[str]
    never_on: list[str]
    timings: dict[str, float]
    status: str = "ok"
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = REPORT_FORMAT
        d["version"] = REPORT_VERSION
        return _json_safe(d)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a run report")
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {d.get('version')}")
        d = {k: v for k, v in d.items() if k not in ("format", "version")}
        d["rounds"] = [Round(**r) for r in d["rounds"]]
        for k in ("baseline", "proven_lb", "ub", "pct_og", "pct_cb", "phase1_lb"):
            d[k] = _float_in(d[k])
        d["lb_history"] = [_float_in(v) for v in d["lb_history"]]
        return cls(**d)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def _float_in(v):
    return float(v) if isinstance(v, str) else v


def metrics(lb: float, ub: float, baseline: float, topology) -> tuple[float, float, int]:
    """``(pct_og, pct_cb, off_count)`` with ``pct_og = 100 (1 - lb/ub)`` and ``pct_cb = 100 (1 - ub/baseline)``."""
    if not (math.isfinite(ub) and ub > 0):
        raise ValueError("upper bound must be finite and positive")
    if not (math.isfinite(baseline) and baseline > 0):
        raise ValueError("baseline must be finite and positive")
    x = np.asarray(topology, float)
    return 100.0 * (1.0 - lb / ub), 100.0 * (1.0 - ub / baseline), int(np.sum(x < 0.5))


def local_opf(net: Network, x, warm: AcPoint | None = None, seed: int = 0) -> LocalSolveResult:
    return solve_local(net, x, warm, seed=seed)


def _warm_point(net: Network, mi: MIConicProgram, z: np.ndarray | None, x) -> AcPoint | None:
    """Voltages and dispatch read off a relaxation solution."""
    if z is None or mi.vmap is None:
        return None
    vm = mi.vmap
    cii = z[vm.cii]
    c, s = z[vm.c], z[vm.s]
    on = np.asarray(x, float) > 0.5
    try:
        e, f = warm_from_relaxation(net, cii, c, s, on)
    except (ValueError, np.linalg.LinAlgError):
        return None
    return AcPoint(e, f, z[vm.pg], z[vm.qg], np.asarray(x, float))


class _Run:
    def __init__(self, net: Network, cfg: RunConfig, opf: OpfOracle | None):
        self.net = net
        self.cfg = cfg
        self.opf = opf
        self.timings: dict[str, float] = {}

    def evaluate(self, topologies, warms) -> list[float]:
        def one(args):
            x, w = args
            if self.opf is not None:
                return float(self.opf(self.net, x, w))
            res = local_opf(self.net, x, w, self.cfg.seed)
            return res.objective if res.feasible else math.inf

        jobs = list(zip(topologies, warms))
        if self.cfg.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as ex:
                return list(ex.map(one, jobs))
        return [one(j) for j in jobs]

    def phase0(self):
        t = time.perf_counter()
        net, cfg = self.net, self.cfg
        if cfg.tighten:
            rep = tighten_all(net, r=cfg.radius, workers=cfg.workers)
            bounds, fixed, never = rep.bounds, rep.fixed, rep.never_on
        else:
            bounds, fixed, never = CsBounds.default(net), [], []
        self.timings["tighten"] = time.perf_counter() - t
        t = time.perf_counter()
        base = self.evaluate([np.ones(net.n_line)], [None])[0]
        self.timings["baseline"] = time.perf_counter() - t
        if not math.isfinite(base):
            raise RunError("the all-on AC OPF has no feasible local solution; cost benefit is undefined")
        return bounds, fixed, never, base

    def phase1(self, bounds):
        t = time.perf_counter()
        net, cfg = self.net, self.cfg
        mi = build_misocp_ots(net, bounds, angles=cfg.angles)
        pool = CutPool()
        counts = []
        disj = []
        if cfg.disjunctions and cfg.t1 > 0:
            disj = [build_disjunction(net, cy, bounds, cycle_id=k) for k, cy in enumerate(cycle_basis(net))]
        prog = mi.program
        sol = solve(prog)
        for it in range(cfg.t1 if disj else 0):
            if not sol.optimal:
                log.warning("relaxation not solved in cut round %d: %s", it, sol.message)
                break
            points = [sol.x[d.program_indices(mi.vmap)] for d in disj]

            def sep(k):
                return separate_cut(points[k], disj[k], mi.vmap, it)

            if cfg.workers > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
                    cuts = list(ex.map(sep, range(len(disj))))
            else:
                cuts = [sep(k) for k in range(len(disj))]
            new = sum(1 for c in cuts if c is not None and pool.add(c))
            counts.append(new)
            if not new:
                break
            G, h = pool.rows(prog.n)
            prog = mi.program.add_inequalities(G, h)
            sol = solve(prog)
        if len(pool):
            G, h = pool.rows(mi.program.n)
            mi = mi.with_rows(G, h)
        lb = math.nan
        if sol.optimal:
            lb = sol.objective
            if math.isfinite(sol.dual_objective):
                lb = min(lb, sol.dual_objective)
        elif sol.status.value == "infeasible":
            lb = math.inf
        self.timings["phase1"] = time.perf_counter() - t
        return mi, pool, counts, lb

    def phase2(self, mi: MIConicProgram, ub: float, best):
        cfg = self.cfg
        t0 = time.perf_counter()
        rounds: list[Round] = []
        lbs: list[float] = []
        seen: dict[tuple, float] = {tuple(int(v) for v in best): ub}
        for t in range(1, cfg.t2 + 1):
            ts = time.perf_counter()
            res = solve_mi(mi, BnbOptions(gap=cfg.mi_gap, time_limit=cfg.mi_time_limit, log_file=cfg.search_log))
            if res.status == "infeasible":
                rounds.append(Round(t, math.inf, res.status, res.nodes, 0, 0, ub, time.perf_counter() - ts))
                log.info("mixed-integer program infeasible after no-good cuts; stopping")
                break
            lb_t = res.lb if not lbs else max(res.lb, lbs[-1])
            lbs.append(lb_t)
            members = [x for x, _ in res.pool.members()]
            fresh = [x for x in members if tuple(int(v) for v in x) not in seen]
            warms = [_warm_point(self.net, mi, res.pool.solution(x), x) for x in fresh]
            for x, val in zip(fresh, self.evaluate(fresh, warms)):
                seen[tuple(int(v) for v in x)] = val
                if val < ub:
                    ub, best = val, np.array(x, float)
            for x in members:
                mi = add_no_good(mi, x)
            rounds.append(Round(t, lb_t, res.status, res.nodes, len(members), len(fresh), ub,
                                time.perf_counter() - ts))
            if members and lb_t >= (1.0 - cfg.epsilon) * ub - REL_TOL * abs(ub):
                break
            if not members:
                break
        self.timings["phase2"] = time.perf_counter() - t0
        return ub, best, lbs, rounds


def run(net: Network, cfg: RunConfig | None = None, *, opf: OpfOracle | None = None) -> RunReport:
    """Optimal transmission switching with the configured relaxation.

    ``opf`` replaces the local AC OPF as the evaluator of candidate
    topologies (useful for exhaustive oracles on toy networks).
    """
    cfg = cfg or RunConfig()
    start = time.perf_counter()
    r = _Run(net, cfg, opf)
    bounds, fixed, never, base = r.phase0()
    mi, pool, counts, lb1 = r.phase1(bounds)
    best = np.ones(net.n_line)
    ub, best, lbs, rounds = r.phase2(mi, base, best)
    proven = lbs[0] if lbs else lb1
    proven = min(proven, ub)
    og, cb, off = metrics(proven, ub, base, best)
    r.timings["total"] = time.perf_counter() - start
    return RunReport(
        case=net.name, method=cfg.method, baseline=base, proven_lb=proven, ub=ub,
        topology=[int(v) for v in best], pct_og=og, pct_cb=cb, off_count=off,
        off_lines=[net.line_label(l) for l in np.where(best < 0.5)[0]], phase1_lb=lb1,
        lb_history=lbs, rounds=rounds, cut_counts=counts,
        fixed_on=[net.line_label(l) for l in fixed], never_on=[net.line_label(l) for l in never],
        timings=dict(r.timings), config=cfg.to_dict())
