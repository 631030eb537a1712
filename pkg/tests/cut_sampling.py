"""Point generators for disjunction membership and cut validity checks.

Points follow the disjunction layout ``(c, s, x, c_ii, c_ii^j pairs)`` of a
cycle.  S1 points come from bus voltages (rank one), S0 points from
per-line constructions with at least one line off or fractional.
"""
import numpy as np

from acots.cuts import rank_one_point


def voltages_in_bounds(net, rng, spread=0.35):
    vmin = np.array([b.v_min for b in net.buses])
    vmax = np.array([b.v_max for b in net.buses])
    mag = vmin + (vmax - vmin) * rng.random(net.n_bus)
    ang = spread * rng.standard_normal(net.n_bus)
    return mag * np.cos(ang), mag * np.sin(ang)


def s1_point(net, disj, bounds, rng):
    """Rank-one point inside the (c, s) boxes; retried until it fits."""
    L = disj.layout.lines
    for _ in range(200):
        e, f = voltages_in_bounds(net, rng)
        pt = rank_one_point(net, disj, e, f)
        k = len(L)
        c, s = pt[:k], pt[k:2 * k]
        if (np.all(c >= bounds.c_lo[L] - 1e-12) and np.all(c <= bounds.c_hi[L] + 1e-12)
                and np.all(s >= bounds.s_lo[L] - 1e-12) and np.all(s <= bounds.s_hi[L] + 1e-12)):
            return pt
    raise RuntimeError("no rank-one point fits the boxes")


def s0_point(net, disj, bounds, rng):
    """Point of the some-line-off disjunct: sum(x) <= |C| - 1, x possibly fractional."""
    ends = net.line_ends
    L, B = disj.layout.lines, disj.layout.buses
    k = len(L)
    vmin = np.array([b.v_min for b in net.buses])
    vmax = np.array([b.v_max for b in net.buses])
    cii = vmin ** 2 + (vmax ** 2 - vmin ** 2) * rng.random(net.n_bus)
    x = rng.integers(0, 2, k).astype(float)
    if rng.random() < 0.3:
        x = rng.random(k)
    if x.sum() > k - 1:
        x[rng.integers(k)] = 0.0
    scale = min(1.0, (k - 1) / max(x.sum(), 1e-12))
    x *= scale
    c = np.zeros(k)
    s = np.zeros(k)
    cj = []
    for t, l in enumerate(L):
        i, j = ends[l]
        radius = x[t] * np.sqrt(cii[i] * cii[j]) * rng.random()
        phi = rng.uniform(-np.pi, np.pi)
        c[t], s[t] = radius * np.cos(phi), radius * np.sin(phi)
        # keep inside the x-scaled line box
        c[t] = np.clip(c[t], bounds.c_lo[l] * x[t], bounds.c_hi[l] * x[t])
        s[t] = np.clip(s[t], bounds.s_lo[l] * x[t], bounds.s_hi[l] * x[t])
        cj += [x[t] * cii[i], x[t] * cii[j]]
    return np.concatenate([c, s, x, cii[B], cj])


def hull_sample(net, disj, bounds, rng):
    """Convex combination of one S1 and one S0 point (a point of the hull)."""
    lam = rng.random()
    return lam * s1_point(net, disj, bounds, rng) + (1 - lam) * s0_point(net, disj, bounds, rng)


def violating_point(net, disj, bounds, rng):
    """All lines on, (c, s) pushed to box corners so the rotated cones fail."""
    L, B = disj.layout.lines, disj.layout.buses
    ends = net.line_ends
    k = len(L)
    vmin = np.array([b.v_min for b in net.buses])
    cii = vmin ** 2 * (1 + 0.02 * rng.random(net.n_bus))
    c = bounds.c_hi[L] * rng.uniform(0.9, 1.0, k)
    s = np.where(rng.random(k) < 0.5, bounds.s_lo[L], bounds.s_hi[L]) * rng.uniform(0.9, 1.0, k)
    cj = []
    for l in L:
        cj += [cii[ends[l, 0]], cii[ends[l, 1]]]
    return np.concatenate([c, s, np.ones(k), cii[B], cj])
