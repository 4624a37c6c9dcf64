"""Census, classification and closed-curve search for profile curves.

The census counts vertical points (critical points of x), horizontal points (critical
points of r) and crossings of the r-axis {x = 0}, and checks two structural laws of the
geodesic equation:

* alternation: at successive vertical points x changes sign, and at successive
  horizontal points r - sqrt(2 alpha) does (x and r - sqrt(2 alpha) have no positive
  minima and no negative maxima);
* every maximal graphical arc with vertical points at both ends crosses x = 0 and
  contains a horizontal point.

Curves continued through the axis carry r < 0 on the mirrored halves; the census uses
|r| there, and an axis point counts as a critical point of |r| with value -sqrt(2 alpha).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError
from .geodesic import DomainConfig, ProfileCurve, Window, graph_view, integrate_geodesic

VERDICTS = ("r_axis", "cylinder", "sphere", "closed_two_crossings", "conical_end",
            "non_embedded", "inconclusive")

CLOSURE_TOL = 1e-10
MEMBER_TOL = 1e-6
TAIL_FRACTION = 0.3


@dataclass
class SelfIntersection:
    s1: float
    s2: float
    x: float
    r: float
    residual: float

    def record(self):
        return {"s1": self.s1, "s2": self.s2, "x": self.x, "r": self.r,
                "residual": self.residual}


@dataclass
class ClassificationReport:
    verdict: str = "inconclusive"
    sigma_estimate: Optional[float] = None
    degenerate: Optional[str] = None
    vertical_points: list = field(default_factory=list)    # (s, x, r)
    horizontal_points: list = field(default_factory=list)
    raxis_crossings: int = 0
    raxis_points: list = field(default_factory=list)
    axis_hits: int = 0
    quadrants: list = field(default_factory=list)
    higgins_ok: bool = True
    higgins_failures: list = field(default_factory=list)
    maximal_arcs: int = 0
    arcs_ok: bool = True
    arc_failures: list = field(default_factory=list)
    self_intersection: Optional[SelfIntersection] = None
    closure_gap: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def n_vertical(self):
        return len(self.vertical_points)

    @property
    def n_horizontal(self):
        return len(self.horizontal_points)

    def record(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["self_intersection"] = (self.self_intersection.record()
                                    if self.self_intersection else None)
        return out


def _quadrant(x, r, eps):
    r = abs(r)
    if r <= eps:
        return "axis"
    if x > eps:
        return "Q1"
    if x < -eps:
        return "Q2"
    return "r_axis"


def _alternates(vals, eps):
    """Indices i where vals[i] and vals[i+1] (outside the dead-band) share a sign."""
    v = [(i, s) for i, s in enumerate(vals) if abs(s) > eps]
    return [v[k][0] for k in range(len(v) - 1) if (v[k][1] > 0) == (v[k + 1][1] > 0)]


def census(curve: ProfileCurve, cfg: Optional[DomainConfig] = None) -> ClassificationReport:
    cfg = cfg or curve.cfg
    rep = ClassificationReport()
    deg = curve.flags.get("degenerate_line")
    if deg:
        rep.degenerate = deg
        rep.notes.append(f"degenerate line ({deg}): census skipped")
        return rep
    eps = cfg.event_eps
    rc = math.sqrt(2 * cfg.alpha)
    ev = curve.events
    vert = [e for e in ev if e.kind == "vertical"]
    axis = [e for e in ev if e.kind == "axis_hit"]
    hor = [e for e in ev if e.kind == "horizontal"]
    rx = [e for e in ev if e.kind == "raxis_crossing"]
    rep.vertical_points = [(e.s, e.x, e.r) for e in vert]
    rep.horizontal_points = [(e.s, e.x, e.r) for e in hor]
    rep.raxis_crossings = len(rx)
    rep.raxis_points = [(e.s, e.x, e.r) for e in rx]
    rep.axis_hits = len(axis)
    rep.quadrants = [_quadrant(e.x, e.r, eps) for e in vert]
    # alternation of critical values
    bad_v = _alternates([e.x for e in vert], eps)
    crit = sorted([(e.s, abs(e.r) - rc) for e in hor] + [(e.s, -rc) for e in axis])
    bad_h = _alternates([c[1] for c in crit], eps) if rc > 0 else []
    rep.higgins_failures = ([("vertical", vert[i].s) for i in bad_v]
                            + [("horizontal", crit[i][0]) for i in bad_h])
    rep.higgins_ok = not rep.higgins_failures
    # maximal graphical arcs
    for arc in graph_view(curve):
        if not arc.maximal:
            continue
        rep.maximal_arcs += 1
        crosses = arc.contains_raxis or abs(arc.x_left) <= eps or abs(arc.x_right) <= eps
        if not crosses or arc.horizontal_points < 1:
            rep.arc_failures.append({"s_start": arc.s_start, "s_end": arc.s_end,
                                     "crosses_x0": bool(crosses),
                                     "horizontal_points": arc.horizontal_points})
    rep.arcs_ok = not rep.arc_failures
    return rep


# ---------------------------------------------------------------------------
# self-intersection

def _seg_cross(p1, p2, q1, q2):
    d1 = p2 - p1
    d2 = q2 - q1
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if den == 0.0:
        return None
    w = q1 - p1
    a = (w[0] * d2[1] - w[1] * d2[0]) / den
    b = (w[0] * d1[1] - w[1] * d1[0]) / den
    if 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0:
        return a, b
    return None


def _candidate_pairs(P, closed):
    """Pairs (i, j), i < j - 1, of polyline segments sharing a spatial grid cell."""
    n = len(P) - 1
    lo = np.minimum(P[:-1], P[1:])
    hi = np.maximum(P[:-1], P[1:])
    seg = np.hypot(*(P[1:] - P[:-1]).T)
    cell = max(float(np.median(seg)) * 4.0, 1e-9)
    origin = P.min(axis=0)
    i0 = np.floor((lo - origin) / cell).astype(np.int64)
    i1 = np.floor((hi - origin) / cell).astype(np.int64)
    grid = {}
    for k in range(n):
        for cx in range(i0[k, 0], i1[k, 0] + 1):
            for cy in range(i0[k, 1], i1[k, 1] + 1):
                grid.setdefault((cx, cy), []).append(k)
    pairs = set()
    for members in grid.values():
        if len(members) < 2:
            continue
        for a_ in range(len(members)):
            for b_ in range(a_ + 1, len(members)):
                i, j = members[a_], members[b_]
                if j - i < 2 or (closed and i == 0 and j == n - 1):
                    continue
                pairs.add((i, j))
    return sorted(pairs)


def _refine(curve, s1, s2, tol, iters=60):
    """Newton on gamma(s1) - gamma(s2) = 0 using the dense output."""
    lo, hi = curve.s[0], curve.s[-1]
    for _ in range(iters):
        a = curve.state_at(s1)
        b = curve.state_at(s2)
        fx, fr = a.x - b.x, a.r - b.r
        if math.hypot(fx, fr) <= 0.01 * tol:
            break
        c1, n1 = math.cos(a.theta), math.sin(a.theta)
        c2, n2 = math.cos(b.theta), math.sin(b.theta)
        det = -c1 * n2 + c2 * n1
        if det == 0.0:
            break
        d1 = (-n2 * fx + c2 * fr) / det
        d2 = (-n1 * fx + c1 * fr) / det
        s1 = min(max(s1 - d1, lo), hi)
        s2 = min(max(s2 - d2, lo), hi)
    a = curve.state_at(s1)
    b = curve.state_at(s2)
    return s1, s2, a, math.hypot(a.x - b.x, a.r - b.r)


def self_intersection(curve: ProfileCurve, cfg: Optional[DomainConfig] = None, tol=1e-10,
                      find_all=False):
    """First (in order of the later parameter) transversal self-intersection, or None.

    Candidate segment pairs come from a uniform spatial grid; each crossing is refined by
    Newton iteration on the dense output.  Adjacent segments are never paired.
    """
    if len(curve.s) < 4:
        raise ConfigError("self_intersection needs at least 4 samples")
    P = curve.positions()
    hits = []
    for i, j in _candidate_pairs(P, curve.closed):
        c = _seg_cross(P[i], P[i + 1], P[j], P[j + 1])
        if c is None:
            continue
        sa = curve.s[i] + c[0] * (curve.s[i + 1] - curve.s[i])
        sb = curve.s[j] + c[1] * (curve.s[j + 1] - curve.s[j])
        s1, s2, st, res = _refine(curve, sa, sb, tol)
        if abs(s2 - s1) < 1e-9:
            continue
        hits.append(SelfIntersection(float(min(s1, s2)), float(max(s1, s2)), float(st.x),
                                     float(st.r), float(res)))
    hits.sort(key=lambda h: (h.s2, h.s1))
    if find_all:
        return hits
    return hits[0] if hits else None


# ---------------------------------------------------------------------------
# closed curves by shooting from the r-axis

@dataclass
class Shot:
    r0: float
    residual: float
    reason: str
    curve: ProfileCurve

    @property
    def finite(self):
        return math.isfinite(self.residual)


def shoot(r0, cfg: Optional[DomainConfig] = None, max_length=50.0,
          window: Optional[Window] = None) -> Shot:
    """Integrate from (0, r0) with horizontal tangent to the next crossing of x = 0.

    The residual is sin(theta) there; a curve that ends first (window, length) gets the
    sentinel copysign(inf, sin theta) at its last sample.  A curve reaching the axis
    continues as its mirror image, so the crossing may have r < 0 (as for the sphere).
    """
    if not r0 > 0:
        raise ConfigError("r0 must be positive")
    cfg = cfg or DomainConfig()
    c = integrate_geodesic((0.0, float(r0), 0.0), max_length, window or Window(-20, 20, 20),
                           cfg, stop=lambda x, r, t: x, events=False, through_axis=True)
    th = float(c.theta[-1])
    if c.termination == "stop_condition":
        return Shot(float(r0), math.sin(th), "crossed_r_axis", c)
    return Shot(float(r0), math.copysign(math.inf, math.sin(th)), c.termination, c)


def shoot_closed(r0, cfg: Optional[DomainConfig] = None, max_length=50.0):
    """sin(theta) at the next crossing of x = 0 (zero iff the reflected curve closes)."""
    return shoot(r0, cfg, max_length).residual


def scan_closed(r_lo, r_hi, n, cfg: Optional[DomainConfig] = None, max_length=50.0):
    """Residuals on a uniform r0 grid and the brackets of sign changes between finite
    residuals whose crossings both lie in the upper half plane."""
    cfg = cfg or DomainConfig()
    r0 = np.linspace(r_lo, r_hi, n + 1)
    shots = [shoot(float(v), cfg, max_length) for v in r0]
    res = np.array([s.residual for s in shots])
    brackets = []
    for k in range(n):
        a, b = res[k], res[k + 1]
        upper = shots[k].curve.r[-1] > 0 and shots[k + 1].curve.r[-1] > 0
        if math.isfinite(a) and math.isfinite(b) and upper and (a > 0) != (b > 0) and a != 0:
            brackets.append((float(r0[k]), float(r0[k + 1])))
    return r0, shots, brackets


@dataclass
class TorusResult:
    r_inner: float
    r_outer: float
    residual: float
    half_length: float
    curve: ProfileCurve
    assembly_gap: float
    direct_gap: float
    census: ClassificationReport
    self_intersection: Optional[SelfIntersection]
    min_r: float
    horizontal_on_r_axis: int

    def record(self):
        return {"r_inner": self.r_inner, "r_outer": self.r_outer, "residual": self.residual,
                "half_length": self.half_length, "assembly_gap": self.assembly_gap,
                "direct_gap": self.direct_gap, "min_r": self.min_r,
                "horizontal_on_r_axis": self.horizontal_on_r_axis,
                "raxis_crossings": self.census.raxis_crossings,
                "vertical_points": self.census.n_vertical,
                "self_intersection": (self.self_intersection.record()
                                      if self.self_intersection else None),
                "source": "artifact-derived (shooting + bisection)"}


def reflect_close(half: ProfileCurve, cfg: DomainConfig) -> ProfileCurve:
    """Closed curve from a half running from x = 0 back to x = 0: append the mirror image
    (x, r) -> (-x, r) traversed backwards."""
    S = float(half.s[-1])
    s2 = 2 * S - half.s[::-1][1:]
    x2 = -half.x[::-1][1:]
    r2 = half.r[::-1][1:]
    t2 = 2 * half.theta[-1] - half.theta[::-1][1:]
    s = np.concatenate([half.s, s2])
    x = np.concatenate([half.x, x2])
    r = np.concatenate([half.r, r2])
    t = np.concatenate([half.theta, t2])
    return ProfileCurve(s, x, r, t, cfg, termination="stop_condition", closed=True)


def find_torus(bracket, cfg: Optional[DomainConfig] = None, closure_tol=CLOSURE_TOL,
               max_length=50.0) -> TorusResult:
    cfg = cfg or DomainConfig()
    a, b = map(float, bracket)
    fa, fb = shoot_closed(a, cfg, max_length), shoot_closed(b, cfg, max_length)
    if not (math.isfinite(fa) and math.isfinite(fb)) or (fa > 0) == (fb > 0):
        raise ConfigError(f"invalid bracket [{a}, {b}]: residuals {fa:.3g}, {fb:.3g}")
    r0 = brentq(lambda v: shoot_closed(v, cfg, max_length), a, b, xtol=1e-15, rtol=1e-15,
                maxiter=200)
    shot = shoot(r0, cfg, max_length)
    if not abs(shot.residual) < closure_tol:
        raise ConfigError(f"bisection stalled at residual {shot.residual:.3g}")
    half = shot.curve
    closed = reflect_close(half, cfg)
    S = float(half.s[-1])
    assembly_gap = float(max(math.hypot(closed.x[-1] - closed.x[0], closed.r[-1] - closed.r[0]),
                             2 * abs(half.x[-1])))
    direct = integrate_geodesic((0.0, r0, 0.0), 2 * S, Window(-20, 20, 20), cfg, events=False)
    direct_gap = float(math.hypot(direct.x[-1], direct.r[-1] - r0))
    rep = census(closed, cfg)
    rep.closure_gap = assembly_gap
    si = self_intersection(closed, cfg)
    hx = sum(1 for e in closed.events if e.kind == "horizontal" and abs(e.x) <= 1e-9)
    return TorusResult(float(r0), float(half.r[-1]), float(shot.residual), S, closed,
                       assembly_gap, direct_gap, rep, si, float(np.min(closed.r)), hx)


# ---------------------------------------------------------------------------
# classification

def _tail_fit(curve, frac=TAIL_FRACTION):
    """Least-squares r = m x + c/x + d/x^3 on the last frac of the samples."""
    n = len(curve.s)
    k = max(4, int(math.ceil(frac * n)))
    x, r = curve.x[-k:], curve.r[-k:]
    if np.any(np.abs(x) < 1.0) or np.any(np.abs(curve._cos[-k:]) < 1e-8):
        return None
    A = np.column_stack([x, 1.0 / x, x ** -3.0])
    coef, *_ = np.linalg.lstsq(A, r, rcond=None)
    res = float(np.max(np.abs(A @ coef - r)))
    return float(coef[0]), float(coef[1]), float(coef[2]), res, x


def classify(curve: ProfileCurve, cfg: Optional[DomainConfig] = None, closure_tol=CLOSURE_TOL,
             tol=MEMBER_TOL) -> ClassificationReport:
    """Decision tree: exact lines, sphere, closed curve, located self-intersection,
    conical tail, otherwise inconclusive."""
    cfg = cfg or curve.cfg
    a = cfg.alpha
    x, r = curve.x, curve.r
    c, sn = curve._cos, curve._sin
    rep = census(curve, cfg)
    if np.max(np.abs(x)) < tol and np.max(np.abs(c)) < tol:
        rep.verdict = "r_axis"
        return rep
    if a > 0 and np.max(np.abs(np.abs(r) - math.sqrt(2 * a))) < tol and np.max(np.abs(sn)) < tol:
        rep.verdict = "cylinder"
        return rep
    if np.max(np.abs(x * x + r * r - 2 * (a + 1))) < tol:
        rep.verdict = "sphere"
        return rep
    gap = math.hypot(x[-1] - x[0], r[-1] - r[0])
    dth = (curve.theta[-1] - curve.theta[0]) / (2 * math.pi)
    closed = curve.closed or (gap < closure_tol and abs(dth - round(dth)) < 1e-6 and round(dth))
    if closed:
        rep.closure_gap = gap
        if rep.raxis_crossings == 2:
            rep.verdict = "closed_two_crossings"
            return rep
        rep.notes.append(f"closed with {rep.raxis_crossings} r-axis crossings")
    if len(curve.s) >= 4:
        rep.self_intersection = self_intersection(curve, cfg)
        if rep.self_intersection is not None:
            rep.verdict = "non_embedded"
            return rep
    fit = None if closed else _tail_fit(curve)
    if fit is not None:
        m, cc, d, res, xt = fit
        dev = np.abs(r[-len(xt):] - m * xt)
        decays = abs(xt[-1]) > abs(xt[0]) and dev[-1] <= dev[0] + tol
        if m > 0 and res < tol * max(1.0, float(np.max(np.abs(r)))) and decays:
            rep.verdict = "conical_end"
            rep.sigma_estimate = m if xt[-1] > 0 else -m
            return rep
        rep.notes.append(f"tail fit rejected (slope {m:.6g}, residual {res:.3g})")
    rep.verdict = "inconclusive"
    return rep


# ---------------------------------------------------------------------------
# maximal geodesics through the ends

def maximal_geodesic(end, cfg: DomainConfig, past_vertical=30.0, max_length=200.0,
                     window: Optional[Window] = None) -> ProfileCurve:
    """The geodesic containing an end, traced inward from x_max through x = 0 and on for
    past_vertical arclength units beyond its first vertical point."""
    X = float(end.x[-1])
    init = (X, float(end.u[-1]), math.atan(float(end.du[-1])) + math.pi)
    window = window or Window(-100, 100, 100)
    c = integrate_geodesic(init, max_length, window, cfg, through_axis=True)
    v = [e for e in c.events if e.kind == "vertical"]
    if not v:
        return c
    s_cut = v[0].s + past_vertical
    return c.truncated(s_cut) if s_cut < c.s[-1] else c


def wound_trajectory(r0, cfg: DomainConfig, n_vertical=7, max_length=400.0):
    """Geodesic from (0, r0) with horizontal tangent cut just after its n-th vertical point
    (None if it has fewer)."""
    c = integrate_geodesic((0.0, float(r0), 0.0), max_length, Window(-30, 30, 30), cfg,
                           through_axis=True)
    v = [e for e in c.events if e.kind == "vertical"]
    if len(v) < n_vertical:
        return None
    s_cut = min(v[n_vertical - 1].s + 1e-3, c.s[-1])
    return c.truncated(s_cut)
