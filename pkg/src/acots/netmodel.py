"""Network data model: MATPOWER ingestion, line admittances and cycle bases.

All quantities are stored in per-unit on ``base_mva``. Generator cost
coefficients are rescaled so that ``cost(p_pu)`` equals the original
dollar cost of ``p_pu * base_mva`` megawatts.
"""
from __future__ import annotations

import json
import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

log = logging.getLogger(__name__)

NETWORK_SCHEMA_VERSION = 1


def _floats(obj, *names):
    for n in names:
        object.__setattr__(obj, n, float(getattr(obj, n)))


class CaseParseError(ValueError):
    """Malformed case text; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class NetworkValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    p_load: float = 0.0
    q_load: float = 0.0
    g_shunt: float = 0.0
    b_shunt: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1

    def __post_init__(self):
        _floats(self, "p_load", "q_load", "g_shunt", "b_shunt", "v_min", "v_max")
        if not (0 < self.v_min <= self.v_max):
            raise NetworkValidationError(
                f"bus {self.id}: need 0 < v_min <= v_max, got [{self.v_min}, {self.v_max}]")


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost_quadratic: float = 0.0
    cost_linear: float = 0.0
    cost_constant: float = 0.0

    def __post_init__(self):
        _floats(self, "p_min", "p_max", "q_min", "q_max", "cost_quadratic", "cost_linear", "cost_constant")
        if self.p_min > self.p_max:
            raise NetworkValidationError(f"generator at bus {self.bus}: p_min > p_max")
        if self.q_min > self.q_max:
            raise NetworkValidationError(f"generator at bus {self.bus}: q_min > q_max")
        if self.cost_quadratic < 0:
            raise NetworkValidationError(f"generator at bus {self.bus}: nonconvex cost")

    def cost(self, p: float) -> float:
        return self.cost_quadratic * p * p + self.cost_linear * p + self.cost_constant


def admittance(r: float, x: float) -> tuple[float, float]:
    """Return ``(G, B)``, the negated series admittance ``-1/(r + jx)``."""
    d = r * r + x * x
    if d <= 0.0:
        raise ValueError("zero-impedance line is not supported")
    return -r / d, x / d


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r_series: float
    x_series: float
    s_max: float = math.inf
    switchable: bool = True
    charging: float = 0.0      # total charging susceptance, b/2 at each terminal

    def __post_init__(self):
        _floats(self, "r_series", "x_series", "s_max", "charging")
        if self.from_bus == self.to_bus:
            raise NetworkValidationError(f"line {self.from_bus}-{self.to_bus} is a self loop")
        if not self.s_max > 0:
            raise NetworkValidationError(f"line {self.from_bus}-{self.to_bus}: s_max must be > 0")
        admittance(self.r_series, self.x_series)

    @property
    def G(self) -> float:
        return admittance(self.r_series, self.x_series)[0]

    @property
    def B(self) -> float:
        return admittance(self.r_series, self.x_series)[1]

    @property
    def key(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    lines: tuple[Line, ...]
    base_mva: float = 100.0
    name: str = "network"

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkValidationError("duplicate bus ids")
        known = set(ids)
        for g in self.generators:
            if g.bus not in known:
                raise NetworkValidationError(f"generator references unknown bus {g.bus}")
        for ln in self.lines:
            if ln.from_bus not in known or ln.to_bus not in known:
                raise NetworkValidationError(f"line {ln.key} references an unknown bus")
        if len(self.buses) > 1 and not nx.is_connected(self.graph()):
            raise NetworkValidationError("network is not connected with all lines on")

    # -- indexing helpers -------------------------------------------------
    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @cached_property
    def line_ends(self) -> np.ndarray:
        """``(n_line, 2)`` array of internal bus indices."""
        idx = self.bus_index
        return np.array([[idx[l.from_bus], idx[l.to_bus]] for l in self.lines], dtype=int).reshape(-1, 2)

    @cached_property
    def gen_bus(self) -> np.ndarray:
        idx = self.bus_index
        return np.array([idx[g.bus] for g in self.generators], dtype=int)

    def adjacency(self) -> dict[int, list[int]]:
        """delta(i): line indices incident to each internal bus index."""
        adj: dict[int, list[int]] = {k: [] for k in range(self.n_bus)}
        for li, (a, b) in enumerate(self.line_ends):
            adj[int(a)].append(li)
            adj[int(b)].append(li)
        return adj

    def graph(self, on: Sequence[bool] | None = None) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(range(self.n_bus))
        idx = {b.id: k for k, b in enumerate(self.buses)}
        for li, ln in enumerate(self.lines):
            if on is None or on[li]:
                g.add_edge(idx[ln.from_bus], idx[ln.to_bus], key=li)
        return g

    def line_label(self, li: int) -> str:
        return "({},{})".format(*self.lines[li].key)

    def find_line(self, from_bus: int, to_bus: int) -> int:
        for li, ln in enumerate(self.lines):
            if {ln.from_bus, ln.to_bus} == {from_bus, to_bus}:
                return li
        raise KeyError((from_bus, to_bus))

    def with_pinned(self, pinned: Iterable[int]) -> "Network":
        """Copy where the given line indices are not switchable."""
        pinned = set(pinned)
        lines = tuple(replace(l, switchable=(k not in pinned) and l.switchable)
                      for k, l in enumerate(self.lines))
        return replace(self, lines=lines)


# ---------------------------------------------------------------------------
# MATPOWER parsing

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([^\[;'\s][^;]*?)\s*;")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        if ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _read_matrices(text: str) -> tuple[dict[str, float], dict[str, list[tuple[int, list[float]]]]]:
    scalars: dict[str, float] = {}
    mats: dict[str, list[tuple[int, list[float]]]] = {}
    current: str | None = None
    start_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if current is None:
            m = _MATRIX_RE.search(line)
            if m:
                current, start_line = m.group(1), lineno
                mats[current] = []
                line = line[m.end():]
            else:
                s = _SCALAR_RE.search(line)
                if s:
                    try:
                        scalars[s.group(1)] = float(s.group(2))
                    except ValueError:
                        pass
                continue
        # inside a matrix body
        closing = "]" in line
        body = line.split("]", 1)[0]
        for chunk in body.split(";"):
            toks = chunk.replace(",", " ").split()
            if not toks:
                continue
            try:
                mats[current].append((lineno, [float(t) for t in toks]))
            except ValueError as exc:
                raise CaseParseError(f"non-numeric entry in mpc.{current}: {chunk.strip()!r}", lineno) from exc
        if closing:
            current = None
    if current is not None:
        raise CaseParseError(f"unterminated matrix mpc.{current}", start_line)
    return scalars, mats


def _check_width(name: str, rows, width: int):
    for lineno, row in rows:
        if len(row) < width:
            raise CaseParseError(f"mpc.{name} row has {len(row)} columns, need >= {width}", lineno)


def parse_case(text: str, *, ignore_taps: bool = False, name: str = "network") -> Network:
    """Parse MATPOWER case text into a per-unit :class:`Network`.

    Branch charging ``b`` stays on the line (``b/2`` at each terminal), so it
    enters the terminal flows and disappears when the line is switched off.
    Branches with an off-nominal tap or phase shift raise
    :class:`NetworkValidationError` unless ``ignore_taps`` is set, in which
    case the tap is dropped and a warning is logged.
    """
    scalars, mats = _read_matrices(text)
    fn = re.search(r"^\s*function\s+mpc\s*=\s*(\w+)", text, re.M)
    if fn and name == "network":
        name = fn.group(1)
    if "bus" not in mats:
        raise CaseParseError("missing mpc.bus")
    base = scalars.get("baseMVA", 100.0)
    bus_rows = mats["bus"]
    gen_rows = mats.get("gen", [])
    br_rows = mats.get("branch", [])
    cost_rows = mats.get("gencost", [])
    _check_width("bus", bus_rows, 13)
    _check_width("gen", gen_rows, 10)
    _check_width("branch", br_rows, 11)
    _check_width("gencost", cost_rows, 4)
    if len(cost_rows) < len(gen_rows):
        raise CaseParseError("mpc.gencost has fewer rows than mpc.gen")

    active: set[int] = set()
    raw_bus = []
    for lineno, row in bus_rows:
        bid = int(row[0])
        if int(row[1]) == 4:
            log.warning("dropping isolated bus %d", bid)
            continue
        raw_bus.append((lineno, bid, row))
        active.add(bid)

    lines = []
    for lineno, row in br_rows:
        f, t = int(row[0]), int(row[1])
        if int(row[10]) == 0:
            continue
        if f not in active or t not in active:
            raise CaseParseError(f"branch {f}-{t} references an unknown bus", lineno)
        tap = row[8] if len(row) > 8 else 0.0
        shift = row[9] if len(row) > 9 else 0.0
        if (tap not in (0.0, 1.0)) or shift != 0.0:
            if not ignore_taps:
                raise NetworkValidationError(
                    f"branch {f}-{t} (line {lineno}) has tap={tap:g}, shift={shift:g}; "
                    "transformers are not supported by the symmetric line model")
            log.warning("branch %d-%d: ignoring tap %g / shift %g", f, t, tap, shift)
        rate = row[5]
        s_max = rate / base if rate > 0 else math.inf
        try:
            lines.append(Line(f, t, row[2], row[3], s_max, charging=row[4]))
        except ValueError as exc:
            raise NetworkValidationError(f"branch {f}-{t} (line {lineno}): {exc}") from exc

    buses = []
    for lineno, bid, row in raw_bus:
        try:
            buses.append(Bus(bid, row[2] / base, row[3] / base, row[4] / base,
                             row[5] / base, v_min=row[12], v_max=row[11]))
        except ValueError as exc:
            raise NetworkValidationError(f"line {lineno}: {exc}") from exc

    gens = []
    for (lineno, row), (clineno, crow) in zip(gen_rows, cost_rows):
        if int(row[7]) <= 0:
            continue
        if int(crow[0]) != 2:
            raise CaseParseError("only polynomial (type 2) costs are supported", clineno)
        ncost = int(crow[3])
        coeffs = crow[4:4 + ncost]
        if len(coeffs) != ncost or ncost > 3:
            raise CaseParseError(f"polynomial cost needs 1..3 coefficients, got {ncost}", clineno)
        c2, c1, c0 = ([0.0] * (3 - ncost) + list(coeffs))
        if int(row[0]) not in active:
            raise CaseParseError(f"generator at unknown bus {int(row[0])}", lineno)
        gens.append(Generator(int(row[0]), row[9] / base, row[8] / base, row[4] / base, row[3] / base,
                              c2 * (base * base), c1 * base, c0))
    return Network(tuple(buses), tuple(gens), tuple(lines), base, name)


def load_case(path: str | Path, **kw) -> Network:
    path = Path(path)
    kw.setdefault("name", path.stem)
    return parse_case(path.read_text(), **kw)


def builtin_case(name: str, **kw) -> Network:
    """Load one of the bundled case files (``nesta_case6ww__api``, ``case9``...)."""
    fname = name if name.endswith(".m") else name + ".m"
    text = resources.files("acots.data").joinpath(fname).read_text()
    kw.setdefault("name", fname[:-2])
    return parse_case(text, **kw)


def _unscale(x: float, base: float) -> float:
    """Return v with ``v / base == x`` exactly, so text round-trips bit-for-bit."""
    v = x * base
    for _ in range(8):
        q = v / base
        if q == x:
            return v
        v = math.nextafter(v, math.inf if q < x else -math.inf)
    return x * base


def _inv_scale(x: float, factor: float) -> float:
    """Return v with ``v * factor == x`` exactly when reachable."""
    v = x / factor
    for _ in range(8):
        q = v * factor
        if q == x:
            return v
        v = math.nextafter(v, math.inf if q < x else -math.inf)
    return x / factor


def format_case(net: Network) -> str:
    """Serialize to MATPOWER text; ``parse_case(format_case(n)) == n``."""
    base = net.base_mva

    def u(x):
        return _unscale(x, base)
    out = [f"function mpc = {net.name}", "mpc.version = '2';", f"mpc.baseMVA = {base!r};", "mpc.bus = ["]
    for b in net.buses:
        out.append("\t" + "\t".join(repr(v) for v in (
            b.id, 1, u(b.p_load), u(b.q_load), u(b.g_shunt), u(b.b_shunt),
            1, 1.0, 0.0, 0.0, 1, b.v_max, b.v_min)) + ";")
    out += ["];", "mpc.gen = ["]
    for g in net.generators:
        out.append("\t" + "\t".join(repr(v) for v in (
            g.bus, 0.0, 0.0, u(g.q_max), u(g.q_min), 1.0, base, 1, u(g.p_max), u(g.p_min))) + ";")
    out += ["];", "mpc.branch = ["]
    for l in net.lines:
        rate = u(l.s_max) if math.isfinite(l.s_max) else 0.0
        out.append("\t" + "\t".join(repr(v) for v in (
            l.from_bus, l.to_bus, l.r_series, l.x_series, l.charging, rate, rate, rate, 0.0, 0.0, 1, -360.0, 360.0)) + ";")
    out += ["];", "mpc.gencost = ["]
    for g in net.generators:
        out.append("\t" + "\t".join(repr(v) for v in (
            2, 0.0, 0.0, 3, _inv_scale(g.cost_quadratic, base * base), _inv_scale(g.cost_linear, base),
            g.cost_constant)) + ";")
    out.append("];")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# JSON fixtures

def network_to_dict(net: Network) -> dict:
    def fin(v):
        return v if math.isfinite(v) else None
    return {
        "schema": "acots.network",
        "version": NETWORK_SCHEMA_VERSION,
        "name": net.name,
        "base_mva": net.base_mva,
        "buses": [vars(b).copy() for b in net.buses],
        "generators": [vars(g).copy() for g in net.generators],
        "lines": [{**vars(l), "s_max": fin(l.s_max)} for l in net.lines],
    }


def network_from_dict(d: dict) -> Network:
    if d.get("schema") != "acots.network" or d.get("version") != NETWORK_SCHEMA_VERSION:
        raise NetworkValidationError("unsupported network schema/version")
    lines = []
    for l in d["lines"]:
        l = dict(l)
        l["s_max"] = math.inf if l["s_max"] is None else l["s_max"]
        lines.append(Line(**l))
    return Network(tuple(Bus(**b) for b in d["buses"]), tuple(Generator(**g) for g in d["generators"]),
                   tuple(lines), d["base_mva"], d.get("name", "network"))


def network_to_json(net: Network, **kw) -> str:
    return json.dumps(network_to_dict(net), **kw)


def network_from_json(text: str) -> Network:
    return network_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Cycle basis

@dataclass(frozen=True)
class Cycle:
    """Closed walk; ``edges`` holds ``(line_index, forward)`` pairs.

    ``forward`` is True when the walk traverses the line from its
    ``from_bus`` to its ``to_bus``.
    """
    edges: tuple[tuple[int, bool], ...]
    buses: tuple[int, ...] = field(default=())  # internal indices, walk order

    def __len__(self):
        return len(self.edges)

    @property
    def lines(self) -> list[int]:
        return [li for li, _ in self.edges]

    def incidence(self) -> int:
        """GF(2) edge-incidence vector packed into an int."""
        v = 0
        for li, _ in self.edges:
            v ^= 1 << li
        return v


def _orient(net: Network, walk_buses: list[int], walk_lines: list[int]) -> Cycle:
    ends = net.line_ends
    edges = []
    for k, li in enumerate(walk_lines):
        a = walk_buses[k]
        edges.append((li, bool(ends[li, 0] == a)))
    return Cycle(tuple(edges), tuple(walk_buses))


def _cycle_from_path(net: Network, path_buses: list[int], path_lines: list[int], closing: int) -> Cycle:
    # path runs u -> ... -> v and the closing line joins v back to u
    return _orient(net, list(path_buses), list(path_lines) + [closing])


def _bfs_path(g: nx.MultiGraph, src: int, dst: int, skip_line: int):
    """Shortest path src->dst avoiding one line; returns (buses, lines)."""
    prev: dict[int, tuple[int, int]] = {src: (-1, -1)}
    q = deque([src])
    while q:
        u = q.popleft()
        if u == dst:
            break
        for _, w, key in sorted(g.edges(u, keys=True), key=lambda e: (e[1], e[2])):
            if key == skip_line or w in prev:
                continue
            prev[w] = (u, key)
            q.append(w)
    if dst not in prev:
        return None
    buses, lines = [dst], []
    while buses[-1] != src:
        u, key = prev[buses[-1]]
        lines.append(key)
        buses.append(u)
    return buses[::-1], lines[::-1]


def cycle_basis(net: Network) -> list[Cycle]:
    """Independent cycles spanning the cycle space, preferring short ones.

    Candidates are the fundamental cycles of a BFS spanning forest plus the
    shortest cycle through every line; a greedy pass in length order keeps
    candidates that are independent over GF(2) (Gaussian elimination on
    packed incidence vectors).
    """
    g = net.graph()
    ends = net.line_ends
    n_comp = nx.number_connected_components(g) if net.n_bus else 0
    rank = net.n_line - net.n_bus + n_comp
    if rank <= 0:
        return []

    candidates: list[Cycle] = []
    # fundamental cycles from a BFS forest
    tree_lines: set[int] = set()
    parent: dict[int, tuple[int, int]] = {}
    depth: dict[int, int] = {}
    for root in sorted(g.nodes):
        if root in parent:
            continue
        parent[root] = (-1, -1)
        depth[root] = 0
        q = deque([root])
        while q:
            u = q.popleft()
            for _, w, key in sorted(g.edges(u, keys=True), key=lambda e: (e[1], e[2])):
                if w not in parent:
                    parent[w] = (u, key)
                    depth[w] = depth[u] + 1
                    tree_lines.add(key)
                    q.append(w)
    for li in range(net.n_line):
        if li in tree_lines:
            continue
        u, v = int(ends[li, 0]), int(ends[li, 1])
        # climb to the common ancestor
        pu, pv, lu, lv = [u], [v], [], []
        a, b = u, v
        while a != b:
            if depth[a] >= depth[b]:
                a, key = parent[a]
                pu.append(a)
                lu.append(key)
            else:
                b, key = parent[b]
                pv.append(b)
                lv.append(key)
        # walk v -> ... -> lca -> ... -> u then close with li (u -> v)
        walk_b = pv + pu[-2::-1]
        walk_l = lv + lu[::-1]
        candidates.append(_cycle_from_path(net, walk_b, walk_l, li))
    # shortest cycle through each line
    for li in range(net.n_line):
        u, v = int(ends[li, 0]), int(ends[li, 1])
        found = _bfs_path(g, v, u, li)
        if found is not None:
            candidates.append(_cycle_from_path(net, found[0], found[1], li))

    candidates.sort(key=lambda c: (len(c), sorted(c.lines)))
    pivots: dict[int, int] = {}  # pivot bit -> reduced row
    basis: list[Cycle] = []
    seen: set[int] = set()
    for cyc in candidates:
        vec = cyc.incidence()
        if vec in seen:
            continue
        seen.add(vec)
        row = vec
        while row:
            top = row.bit_length() - 1
            if top not in pivots:
                pivots[top] = row
                basis.append(cyc)
                break
            row ^= pivots[top]
        if len(basis) == rank:
            break
    assert len(basis) == rank, "cycle basis construction lost rank"
    return basis


def cycle_is_closed_walk(net: Network, cyc: Cycle) -> bool:
    """Structural check: consecutive edges chain and the walk closes."""
    ends = net.line_ends
    if not cyc.edges:
        return False
    walk = []
    for li, fwd in cyc.edges:
        a, b = (ends[li, 0], ends[li, 1]) if fwd else (ends[li, 1], ends[li, 0])
        if walk and walk[-1][1] != a:
            return False
        walk.append((int(a), int(b)))
    if walk[-1][1] != walk[0][0]:
        return False
    interior = [a for a, _ in walk]
    return len(set(interior)) == len(interior)
