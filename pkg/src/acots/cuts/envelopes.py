"""Linear envelopes of theta = arctan(s / c) over a box with c > 0."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ArctanEnvelope:
    """Two upper and two lower planes ``theta = gamma + alpha c + beta s``.

    ``upper`` entries already include the shift (so they dominate arctan on
    the box); ``lower`` entries are shifted down likewise.  In a switching
    model the upper rows read ``gamma + alpha c + beta s + (2 pi - gamma)(1 - x)
    >= theta`` and the lower rows ``gamma + alpha c + beta s - (2 pi +
    gamma)(1 - x) <= theta``.
    """
    box: tuple[float, float, float, float]
    upper: tuple[tuple[float, float, float], ...]
    lower: tuple[tuple[float, float, float], ...]
    shifts: tuple[float, float, float, float]

    def upper_value(self, c, s) -> np.ndarray:
        return np.min([g + a * np.asarray(c) + b * np.asarray(s) for g, a, b in self.upper], axis=0)

    def lower_value(self, c, s) -> np.ndarray:
        return np.max([g + a * np.asarray(c) + b * np.asarray(s) for g, a, b in self.lower], axis=0)

    def rows_hold(self, c, s, theta, x, tol=1e-9) -> bool:
        c, s, theta, x = map(np.asarray, (c, s, theta, x))
        ok = True
        for g, a, b in self.upper:
            ok &= np.all(g + a * c + b * s + (2 * math.pi - g) * (1 - x) >= theta - tol)
        for g, a, b in self.lower:
            ok &= np.all(g + a * c + b * s - (2 * math.pi + g) * (1 - x) <= theta + tol)
        return bool(ok)


def _plane(points) -> tuple[float, float, float]:
    M = np.array([[1.0, c, s] for c, s, _ in points])
    t = np.array([th for _, _, th in points])
    sol, *_ = np.linalg.lstsq(M, t, rcond=1e-12)
    return float(sol[0]), float(sol[1]), float(sol[2])


def kkt_candidates(alpha: float, beta: float, box) -> list[tuple[float, float]]:
    """Candidate maximizers/minimizers of arctan(s/c) - (alpha c + beta s) on the box.

    Corners, stationary points along each edge and the interior stationary
    point; the gradient of arctan(s/c) is (-s, c) / (c^2 + s^2).
    """
    c_lo, c_hi, s_lo, s_hi = box
    cand = [(c_lo, s_lo), (c_lo, s_hi), (c_hi, s_lo), (c_hi, s_hi)]
    # edges with c fixed: c / (c^2 + s^2) = beta
    if beta > 0:
        for c in (c_lo, c_hi):
            r = c / beta - c * c
            if r >= 0:
                for s in (math.sqrt(r), -math.sqrt(r)):
                    if s_lo <= s <= s_hi:
                        cand.append((c, s))
    # edges with s fixed: -s / (c^2 + s^2) = alpha
    if alpha != 0:
        for s in (s_lo, s_hi):
            r = -s / alpha - s * s
            if r >= 0:
                c = math.sqrt(r)
                if c_lo <= c <= c_hi:
                    cand.append((c, s))
    nrm = alpha * alpha + beta * beta
    if nrm > 0:
        c, s = beta / nrm, -alpha / nrm
        if c_lo <= c <= c_hi and s_lo <= s <= s_hi:
            cand.append((c, s))
    return cand


def plane_error(gamma, alpha, beta, box, sense: str) -> float:
    """max (sense="max") or min of arctan(s/c) - (gamma + alpha c + beta s) on the box."""
    vals = [math.atan(s / c) - (gamma + alpha * c + beta * s) for c, s in kkt_candidates(alpha, beta, box)]
    return max(vals) if sense == "max" else min(vals)


def arctan_envelopes(c_lo: float, c_hi: float, s_lo: float, s_hi: float) -> ArctanEnvelope | None:
    """Envelopes for the box; ``None`` when ``c_lo <= 0`` (envelope skipped)."""
    if not c_lo > 0:
        return None
    box = (float(c_lo), float(c_hi), float(s_lo), float(s_hi))
    z = {1: (c_lo, s_hi), 2: (c_hi, s_hi), 3: (c_hi, s_lo), 4: (c_lo, s_lo)}
    pts = {k: (c, s, math.atan(s / c)) for k, (c, s) in z.items()}
    upper, lower, shifts = [], [], []
    for tri in ((1, 2, 3), (1, 3, 4)):
        g, a, b = _plane([pts[k] for k in tri])
        d = max(0.0, plane_error(g, a, b, box, "max"))
        upper.append((g + d, a, b))
        shifts.append(d)
    for tri in ((2, 3, 4), (1, 2, 4)):
        g, a, b = _plane([pts[k] for k in tri])
        d = min(0.0, plane_error(g, a, b, box, "min"))
        lower.append((g + d, a, b))
        shifts.append(d)
    return ArctanEnvelope(box, tuple(upper), tuple(lower), tuple(shifts))
