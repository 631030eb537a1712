"""McCormick envelopes and the bilinear form of cycle angle conditions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..netmodel import Cycle, Network


def mccormick(a_lo: float, a_hi: float, b_lo: float, b_hi: float):
    """Envelope rows for ``y = a b`` as ``(k_a, k_b, k_y, rhs)``: ``k_a a + k_b b + k_y y >= rhs``."""
    for v in (a_lo, a_hi, b_lo, b_hi):
        if not np.isfinite(v):
            raise ValueError("McCormick envelopes need finite bounds")
    return [
        (-b_lo, -a_lo, 1.0, -a_lo * b_lo),   # y >= a_lo b + a b_lo - a_lo b_lo
        (-b_hi, -a_hi, 1.0, -a_hi * b_hi),   # y >= a_hi b + a b_hi - a_hi b_hi
        (b_lo, a_hi, -1.0, a_hi * b_lo),     # y <= a_hi b + a b_lo - a_hi b_lo
        (b_hi, a_lo, -1.0, a_lo * b_hi),     # y <= a_lo b + a b_hi - a_lo b_hi
    ]


def mccormick_interval(rows, a: float, b: float) -> tuple[float, float]:
    """Range of ``y`` allowed by envelope rows at fixed ``(a, b)``."""
    lo, hi = -np.inf, np.inf
    for ka, kb, ky, r in rows:
        bound = (r - ka * a - kb * b) / ky
        if ky > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    return lo, hi


# Symbols: ("c", line), ("s", line), ("cii", bus), ("ct", chord), ("st", chord)
Symbol = tuple


@dataclass
class BilinearSystem:
    """Equations ``sum coef * u * v = 0`` over (c, s, c_ii, chord) symbols.

    ``chords`` lists artificial edges as (from bus, to bus) internal indices
    with box ``[-bound, bound]`` for both their c and s values.
    """
    equations: list[list[tuple[float, Symbol, Symbol]]]
    chords: list[tuple[int, int]] = field(default_factory=list)
    chord_bounds: list[float] = field(default_factory=list)
    triangles: list[tuple[int, int, int]] = field(default_factory=list)

    def products(self) -> list[tuple[Symbol, Symbol]]:
        seen = {}
        for eq in self.equations:
            for _, u, v in eq:
                key = tuple(sorted((u, v)))
                seen.setdefault(key, None)
        return list(seen)

    def residuals(self, values: dict) -> np.ndarray:
        return np.array([sum(k * values[u] * values[v] for k, u, v in eq) for eq in self.equations])


def _edge(line: int, forward: bool):
    """(c symbol, s symbol, sign of s) for a line traversed in the given direction."""
    return ("c", line), ("s", line), (1.0 if forward else -1.0)


def cycle_bilinearize(net: Network, cycle: Cycle) -> BilinearSystem:
    """Split the cycle into a fan of triangles and write each closure bilinearly.

    For a triangle ``a -> b -> k`` with angles adding up,
    ``c_bb c_ak = c_ab c_bk - s_ab s_bk`` and ``c_bb s_ak = s_ab c_bk + c_ab s_bk``
    (both sides carry the factor ``|V_a| |V_b|^2 |V_k|``).  Chords from the
    first bus carry artificial ``(c~, s~)`` variables bounded by
    ``+-Vmax_a Vmax_k``.
    """
    k = len(cycle)
    if k < 3:
        raise ValueError("bilinearization needs a cycle with at least 3 lines")
    buses = list(cycle.buses)
    vmax = np.array([b.v_max for b in net.buses])
    a = buses[0]
    chords, cb = [], []
    chord_id = {}
    for t in range(2, k - 1):
        chord_id[t] = len(chords)
        chords.append((a, buses[t]))
        cb.append(float(vmax[a] * vmax[buses[t]]))

    def a_to(t):
        """Edge a -> buses[t] (t in 1..k-1)."""
        if t == 1:
            return _edge(*cycle.edges[0])
        if t == k - 1:
            li, fwd = cycle.edges[k - 1]  # runs buses[k-1] -> a
            return _edge(li, not fwd)
        cid = chord_id[t]
        return ("ct", cid), ("st", cid), 1.0

    eqs, tris = [], []
    for t in range(1, k - 1):
        b, kk = buses[t], buses[t + 1]
        c_ab, s_ab, g_ab = a_to(t)
        c_bk, s_bk, g_bk = _edge(*cycle.edges[t])
        c_ak, s_ak, g_ak = a_to(t + 1)
        cbb = ("cii", b)
        eqs.append([(1.0, c_ab, c_bk), (-g_ab * g_bk, s_ab, s_bk), (-1.0, cbb, c_ak)])
        eqs.append([(g_ab, s_ab, c_bk), (g_bk, c_ab, s_bk), (-g_ak, cbb, s_ak)])
        tris.append((a, b, kk))
    return BilinearSystem(eqs, chords, cb, tris)
