"""Bound tightening of (c, s) boxes and binary fixing on local neighborhoods.

For a line ``(k, l)`` the relaxation is restricted to the buses within graph
distance ``r`` of either end: power balance is imposed on those buses, every
line touching them is modelled (switchable), and voltages of all their
endpoints are kept.  Optimizing ``c_kl`` and ``s_kl`` with ``x_kl = 1`` gives
a box that is valid whenever the line is on, which is all the switched
formulation needs because ``c_lo x <= c <= c_hi x``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..conic import SolverOptions, Status, solve
from ..formulation import CsBounds, build_model
from ..modeling import Lin
from ..netmodel import Network

log = logging.getLogger(__name__)

SAFETY = 1e-7
FIX_THRESHOLD = 1e-6


def neighborhood(net: Network, line: int, r: int):
    """``(balance buses, lines, voltage buses)`` of the radius-``r`` neighborhood."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    adj = net.adjacency()
    ends = net.line_ends
    dist = {int(ends[line, 0]): 0, int(ends[line, 1]): 0}
    frontier = list(dist)
    for d in range(1, r + 1):
        nxt = []
        for i in frontier:
            for l in adj[i]:
                for j in (int(ends[l, 0]), int(ends[l, 1])):
                    if j not in dist:
                        dist[j] = d
                        nxt.append(j)
        frontier = nxt
    balance = sorted(dist)
    lines = sorted({l for i in balance for l in adj[i]})
    voltage = sorted(set(balance) | {int(b) for l in lines for b in ends[l]})
    return balance, lines, voltage


def _local_model(net, bounds, line, r, force_on):
    balance, lines, voltage = neighborhood(net, line, r)
    b = bounds.copy()
    b.fixed_on = np.array(b.fixed_on, dtype=bool)
    b.fixed_on[line] = bool(force_on)
    m, vm = build_model(net, b, switching=True, balance_buses=balance, lines=lines,
                        voltage_buses=voltage, with_objective=False)
    if not force_on:
        # the line's own x must stay free even if it is not switchable
        m.lb[vm.x[line]] = 0.0
    return m, vm


def _optimize(m, var: int, sense: float, opts):
    m.minimize(Lin({var: sense}))
    sol = solve(m.build(), opts)
    if sol.status is Status.INFEASIBLE:
        return None, sol
    if not sol.optimal:
        return math.nan, sol
    val = sol.objective
    if math.isfinite(sol.dual_objective):
        val = min(val, sol.dual_objective)
    return sense * val, sol


@dataclass
class TightenResult:
    line: int
    c_lo: float
    c_hi: float
    s_lo: float
    s_hi: float
    infeasible: bool = False
    failed: list[str] = field(default_factory=list)


def tighten_bounds(net: Network, bounds: CsBounds, line: int, r: int = 2,
                   opts: SolverOptions | None = None) -> TightenResult:
    """Four conic solves (min/max of ``c_kl`` and ``s_kl``) with ``x_kl = 1``.

    The result is intersected with the incoming box, so it never widens.  If
    the local relaxation is infeasible the line can never be on; this is
    reported and the box is left unchanged.
    """
    opts = opts or SolverOptions()
    old = (bounds.c_lo[line], bounds.c_hi[line], bounds.s_lo[line], bounds.s_hi[line])
    out = TightenResult(line, *old)
    m, vm = _local_model(net, bounds, line, r, force_on=True)
    vals = {}
    for name, var in (("c", vm.c[line]), ("s", vm.s[line])):
        for sense, key in ((1.0, "lo"), (-1.0, "hi")):
            v, sol = _optimize(m, int(var), sense, opts)
            if v is None:
                out.infeasible = True
                log.info("line %s cannot be switched on in its neighborhood", net.line_label(line))
                return TightenResult(line, *old, infeasible=True)
            if not math.isfinite(v):
                out.failed.append(f"{key} {name}: {sol.message}")
                continue
            vals[name + key] = v
    if "clo" in vals:
        out.c_lo = max(old[0], vals["clo"] - SAFETY)
    if "chi" in vals:
        out.c_hi = min(old[1], vals["chi"] + SAFETY)
    if "slo" in vals:
        out.s_lo = max(old[2], vals["slo"] - SAFETY)
    if "shi" in vals:
        out.s_hi = min(old[3], vals["shi"] + SAFETY)
    # numerical noise can cross a (nearly) degenerate interval
    if out.c_lo > out.c_hi:
        out.c_lo = out.c_hi = 0.5 * (out.c_lo + out.c_hi)
    if out.s_lo > out.s_hi:
        out.s_lo = out.s_hi = 0.5 * (out.s_lo + out.s_hi)
    return out


def fix_binaries(net: Network, bounds: CsBounds, line: int, r: int = 2,
                 opts: SolverOptions | None = None) -> bool:
    """True when the local relaxation forces ``x_kl > 1e-6`` (fix the line on)."""
    m, vm = _local_model(net, bounds, line, r, force_on=False)
    v, sol = _optimize(m, int(vm.x[line]), 1.0, opts or SolverOptions())
    if v is None:
        log.info("neighborhood of line %s is infeasible", net.line_label(line))
        return False
    return bool(math.isfinite(v) and v > FIX_THRESHOLD)


@dataclass
class TighteningReport:
    bounds: CsBounds
    results: list[TightenResult]
    fixed: list[int]
    never_on: list[int]


def tighten_all(net: Network, bounds: CsBounds | None = None, r: int = 2, workers: int = 1,
                fix: bool = True, opts: SolverOptions | None = None) -> TighteningReport:
    """Tighten every line's box and fix lines whose removal the relaxation forbids.

    Each line is processed against the incoming bounds, so the tasks are
    independent and the result does not depend on the worker count.
    """
    bounds = CsBounds.default(net) if bounds is None else bounds
    lines = range(net.n_line)

    def task(l):
        res = tighten_bounds(net, bounds, l, r, opts)
        on = fix and net.lines[l].switchable and not bounds.fixed_on[l] and fix_binaries(net, bounds, l, r, opts)
        return res, on

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(task, lines))
    else:
        out = [task(l) for l in lines]
    nb = bounds.copy()
    fixed, never = [], []
    for l, (res, on) in enumerate(out):
        nb.c_lo[l], nb.c_hi[l], nb.s_lo[l], nb.s_hi[l] = res.c_lo, res.c_hi, res.s_lo, res.s_hi
        if res.infeasible:
            never.append(l)
        if on:
            nb.fixed_on[l] = True
            fixed.append(l)
    return TighteningReport(nb, [r_ for r_, _ in out], fixed, never)
