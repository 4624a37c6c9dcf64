"""Profile-curve geodesics for rotationally symmetric self-shrinkers.

A profile curve in the half-plane {(x, r) : r > 0} is parametrized by Euclidean
arclength s with tangent angle theta:

    x' = cos(theta),  r' = sin(theta),
    theta' = (x/2) sin(theta) + (alpha/r - r/2) cos(theta).

Rotating the curve about the x-axis in R^{alpha+2} gives a self-shrinker; alpha = n - 1
for hypersurfaces of dimension n, but any real alpha >= 0 is accepted.

The system is invariant under (x, r, theta) -> (x, -r, -theta).  A curve that reaches
the axis r = 0 (it always does so orthogonally) therefore continues as its mirror
image, and samples with r < 0 belong to that mirrored half.  The right-hand side in
the mirrored half is the same formula, so the integrator only has to treat the axis
point itself specially.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError

TERMINATIONS = ("reached_max_length", "hit_axis", "left_domain_window",
                "step_underflow", "stop_condition")
EVENT_KINDS = ("vertical", "horizontal", "raxis_crossing", "cylinder_crossing", "axis_hit")

# thresholds for flagging a curve as one of the two straight-line geodesics
_LINE_TOL = 1e-12


@dataclass(frozen=True)
class DomainConfig:
    alpha: float = 1.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    r_axis_eps: float = 1e-6
    event_eps: float = 1e-10
    max_step: float = 0.05
    min_step: float = 1e-12
    # radius of the zone in which a descending curve is matched against the
    # regular solutions leaving the axis
    axis_match_radius: float = 2.0
    axis_match_tol: float = 1e-6

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be a finite number >= 0, got {self.alpha}")
        for name in ("rel_tol", "abs_tol", "r_axis_eps", "event_eps", "max_step",
                     "min_step", "axis_match_radius", "axis_match_tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.min_step >= self.max_step:
            raise ConfigError("min_step must be smaller than max_step")

    @classmethod
    def for_dimension(cls, n: float, **kw) -> "DomainConfig":
        if n < 1:
            raise ConfigError(f"dimension must be >= 1, got {n}")
        return cls(alpha=float(n) - 1.0, **kw)

    def cylinder_radius(self) -> float:
        return math.sqrt(2.0 * self.alpha)

    def sphere_radius(self) -> float:
        return math.sqrt(2.0 * (self.alpha + 1.0))


class GeodesicState(NamedTuple):
    s: float
    x: float
    r: float
    theta: float


@dataclass(frozen=True)
class Window:
    """Rectangle the integration is confined to (|r| <= r_max)."""
    x_min: float = -60.0
    x_max: float = 60.0
    r_max: float = 60.0

    def contains(self, x: float, r: float) -> bool:
        return self.x_min <= x <= self.x_max and abs(r) <= self.r_max


@dataclass(frozen=True)
class Event:
    kind: str
    s: float
    x: float
    r: float
    theta: float
    residual: float = 0.0


# ---------------------------------------------------------------------------
# right-hand sides

def _gap(r, a):
    """alpha/r - r/2, written so that it vanishes exactly at r = fl(sqrt(2 alpha))."""
    if a:
        rc = math.sqrt(2.0 * a)
        return (rc - r) * (rc + r) / (2.0 * r)
    return -0.5 * r


def _field(x, r, th, a):
    c = math.cos(th)
    sn = math.sin(th)
    return c, sn, 0.5 * x * sn + _gap(r, a) * c


def geodesic_rhs(state, cfg: DomainConfig):
    """(dx, dr, dtheta) for a state with r > 0."""
    x, r, th = state.x, state.r, state.theta
    if not r > 0:
        raise DomainError(f"geodesic_rhs needs r > 0, got r={r}")
    return _field(x, r, th, cfg.alpha)


def ssode_rhs(x, u, du, cfg: DomainConfig):
    """u'' for a profile written as a graph r = u(x)."""
    if not u > 0:
        raise DomainError(f"ssode_rhs needs u > 0, got u={u}")
    a = cfg.alpha
    return (0.5 * x * du + _gap(u, a)) * (1.0 + du * du)


def rgraph_rhs(r, f, df, cfg: DomainConfig):
    """f'' for a profile written as a graph x = f(r)."""
    if not r > 0:
        raise DomainError(f"rgraph_rhs needs r > 0, got r={r}")
    a = cfg.alpha
    return (-_gap(r, a) * df - 0.5 * f) * (1.0 + df * df)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)


def _dp_step(y, h, k1, a):
    x, r, t = y
    f = _field
    k2 = f(x + h * _A21 * k1[0], r + h * _A21 * k1[1], t + h * _A21 * k1[2], a)
    k3 = f(x + h * (_A31 * k1[0] + _A32 * k2[0]),
           r + h * (_A31 * k1[1] + _A32 * k2[1]),
           t + h * (_A31 * k1[2] + _A32 * k2[2]), a)
    k4 = f(x + h * (_A41 * k1[0] + _A42 * k2[0] + _A43 * k3[0]),
           r + h * (_A41 * k1[1] + _A42 * k2[1] + _A43 * k3[1]),
           t + h * (_A41 * k1[2] + _A42 * k2[2] + _A43 * k3[2]), a)
    k5 = f(x + h * (_A51 * k1[0] + _A52 * k2[0] + _A53 * k3[0] + _A54 * k4[0]),
           r + h * (_A51 * k1[1] + _A52 * k2[1] + _A53 * k3[1] + _A54 * k4[1]),
           t + h * (_A51 * k1[2] + _A52 * k2[2] + _A53 * k3[2] + _A54 * k4[2]), a)
    k6 = f(x + h * (_A61 * k1[0] + _A62 * k2[0] + _A63 * k3[0] + _A64 * k4[0] + _A65 * k5[0]),
           r + h * (_A61 * k1[1] + _A62 * k2[1] + _A63 * k3[1] + _A64 * k4[1] + _A65 * k5[1]),
           t + h * (_A61 * k1[2] + _A62 * k2[2] + _A63 * k3[2] + _A64 * k4[2] + _A65 * k5[2]), a)
    yn = (x + h * (_B1 * k1[0] + _B3 * k3[0] + _B4 * k4[0] + _B5 * k5[0] + _B6 * k6[0]),
          r + h * (_B1 * k1[1] + _B3 * k3[1] + _B4 * k4[1] + _B5 * k5[1] + _B6 * k6[1]),
          t + h * (_B1 * k1[2] + _B3 * k3[2] + _B4 * k4[2] + _B5 * k5[2] + _B6 * k6[2]))
    k7 = f(yn[0], yn[1], yn[2], a)
    err = tuple(h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                     + _E6 * k6[i] + _E7 * k7[i]) for i in range(3))
    return yn, k7, err


def _restep(y, h, a, max_step):
    """Advance y by h with fixed DP5 substeps no longer than max_step."""
    m = max(1, int(math.ceil(abs(h) / max_step)))
    dh = h / m
    for _ in range(m):
        y, _, _ = _dp_step(y, dh, _field(y[0], y[1], y[2], a), a)
    return y


def _axis_taylor(xb, h, a):
    """State at distance h from the axis point (xb, 0) along the regular solution, + frame."""
    n2 = 2.0 * a + 2.0
    return xb - xb * h * h / (2.0 * n2), h, 0.5 * math.pi + xb * h / n2


class _Run:
    """Raw output of one adaptive march."""
    __slots__ = ("s", "x", "r", "t", "reason", "axis")

    def __init__(self):
        self.s, self.x, self.r, self.t = [], [], [], []
        self.reason = None
        self.axis = None

    def push(self, s, y):
        self.s.append(s)
        self.x.append(y[0])
        self.r.append(y[1])
        self.t.append(y[2])


def _march(s0, y0, s_end, cfg, window, stop=None, watch_axis=True, run=None):
    a = cfg.alpha
    run = run if run is not None else _Run()
    run.push(s0, y0)
    s, y = s0, y0
    k1 = _field(y[0], y[1], y[2], a)
    h = cfg.max_step
    if a > 0:
        h = min(h, 0.1 * abs(y[1]) / a)
    h = max(h, 10 * cfg.min_step)
    facold = 1e-4
    next_try = math.inf
    while True:
        left = s_end - s
        if left <= 1e-14 * max(1.0, abs(s_end)):
            run.reason = "reached_max_length"
            return run
        h = min(h, cfg.max_step)
        last = h >= left
        if last:
            h = left
        if h < cfg.min_step and not last:
            run.reason = "step_underflow"
            return run
        yn, k7, e = _dp_step(y, h, k1, a)
        acc = 0.0
        for i in range(3):
            sc = cfg.abs_tol + cfg.rel_tol * max(abs(y[i]), abs(yn[i]))
            acc += (e[i] / sc) ** 2
        err = math.sqrt(acc / 3.0)
        if not math.isfinite(err) or (a > 0 and yn[1] * y[1] <= 0):
            h *= 0.25
            continue
        fac11 = err ** 0.17
        if err > 1.0:
            h /= min(5.0, fac11 / 0.9)
            continue
        # accepted
        if stop is not None:
            g0 = stop(*y)
            g1 = stop(*yn)
            if g0 != 0 and (g1 == 0 or (g0 > 0) != (g1 > 0)):
                tau = brentq(lambda tt: stop(*_restep(y, tt, a, cfg.max_step)), 0.0, h,
                             xtol=1e-15, rtol=1e-15)
                run.push(s + tau, _restep(y, tau, a, cfg.max_step))
                run.reason = "stop_condition"
                return run
        s = s_end if last else s + h
        y, k1 = yn, k7
        run.push(s, y)
        if window is not None and not window.contains(y[0], y[1]):
            run.reason = "left_domain_window"
            return run
        if a > 0 and watch_axis:
            ar = abs(y[1])
            zone = min(cfg.axis_match_radius,
                       (a + 1.0) / max(abs(y[0]), 1e-300))
            if ar < min(zone, next_try) and y[1] * math.sin(y[2]) < 0:
                m = _match_axis(y, cfg)
                if m is not None:
                    run.axis = m
                    run.reason = "hit_axis"
                    return run
                # not (yet) on an axis-bound solution: try again closer in
                next_try = 0.5 * ar
            elif ar >= zone:
                next_try = math.inf
            if ar < cfg.r_axis_eps and abs(math.cos(y[2])) < 1e-4:
                # last-resort snap by quadratic extrapolation of x along the approach
                xb = y[0] + ar * k1[0] / abs(k1[1])
                run.axis = (xb, [], ar)
                run.reason = "hit_axis"
                return run
        fac = max(0.1, min(5.0, fac11 / facold ** 0.04 / 0.9))
        h = h / fac
        facold = max(err, 1e-4)


def _axis_up(xb, r_target, cfg):
    """Regular solution leaving the axis at (xb, 0), marched until r = r_target (+ frame)."""
    h0 = cfg.r_axis_eps
    y0 = _axis_taylor(xb, h0, cfg.alpha)
    run = _Run()
    run.push(0.0, (xb, 0.0, 0.5 * math.pi))
    run = _march(h0, y0, h0 + 4.0 * r_target + 1.0, cfg, None,
                 stop=lambda x, r, t: r - r_target, watch_axis=False, run=run)
    if run.reason != "stop_condition":
        return None
    return run


def _wrap(d):
    return (d + math.pi) % (2.0 * math.pi) - math.pi


def _match_axis(y, cfg):
    """Try to identify the current (descending) state with a regular axis solution.

    Marching into the axis is unstable (the singular mode grows like dist^-alpha), so
    the approach is replaced by the reversed regular solution that starts on the axis,
    which is integrated in its stable direction.  Returns (x_b, approach samples) or
    None when the state is not close to such a solution.
    """
    a = cfg.alpha
    x, r, th = y
    rho = 1.0 if r > 0 else -1.0
    rc = abs(r)
    thf = rho * th
    n2 = 2.0 * a + 2.0

    def miss(xb):
        run = _axis_up(xb, rc, cfg)
        if run is None:
            return None, None
        return run.x[-1] - x, run

    xb0 = x / (1.0 - rc * rc / (2.0 * n2))
    f0, run0 = miss(xb0)
    if f0 is None:
        return None
    xb1 = xb0 - f0
    tol = 1e-13 * max(1.0, abs(x))
    best = (abs(f0), xb0, run0)
    for _ in range(30):
        if best[0] <= tol:
            break
        f1, run1 = miss(xb1)
        if f1 is None:
            return None
        if abs(f1) < best[0]:
            best = (abs(f1), xb1, run1)
        if f1 == f0:
            break
        xb0, xb1, f0 = xb1, xb1 - f1 * (xb1 - xb0) / (f1 - f0), f1
    if best[0] > 1e3 * tol:
        return None
    _, xb, run = best
    dth = _wrap(thf - run.t[-1] - math.pi)
    if abs(dth) > cfg.axis_match_tol:
        return None
    su = np.asarray(run.s)
    m = round((th - rho * (run.t[-1] + math.pi)) / (2.0 * math.pi))
    off = 2.0 * math.pi * m
    samples = [(su[-1] - su[k], run.x[k], rho * run.r[k], rho * (run.t[k] + math.pi) + off)
               for k in range(len(su) - 2, -1, -1)]
    return xb, samples, dth


# ---------------------------------------------------------------------------
# curves

def derived_scalars(x, r, theta, alpha):
    """Lambda, kappa, Psi, Phi, H (and the tangent cos/sin) at samples (x, r, theta).

    Axis samples (r == 0) get the limiting curvature Lambda / (2 alpha + 2); Psi and Phi
    are nan where the curve is vertical.
    """
    x, r, th = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, r, theta))
    a = alpha
    on_axis = (r == 0) if a > 0 else np.zeros(r.shape, dtype=bool)
    c = np.cos(th)
    sn = np.sin(th)
    c[on_axis] = 0.0
    sn[on_axis] = np.sign(sn[on_axis])
    lam = x * sn - r * c
    with np.errstate(divide="ignore", invalid="ignore"):
        ar = np.where(on_axis, 0.0, (a / np.where(on_axis, 1.0, r)) if a else 0.0)
        kappa = np.where(on_axis, lam / (2 * a + 2), 0.5 * x * sn + (ar - 0.5 * r) * c)
        graph = np.abs(c) > 1e-14
        tn = np.where(graph, sn / np.where(graph, c, 1.0), np.nan)
        psi = np.where(graph, lam / np.where(graph, c, 1.0), np.nan)
        phi = np.where(graph & ~on_axis, 0.5 * x * tn + ar - 0.5 * r, np.nan)
    return {"cos": c, "sin": sn, "Lambda": lam, "kappa": kappa, "Psi": psi, "Phi": phi,
            "H": -0.5 * lam}


class ProfileCurve:
    """Sampled profile curve with derived scalars and events.

    Arrays s, x, r, theta hold the samples; H, Psi, Phi, Lambda and kappa the derived
    scalars.  Samples with r == 0 are axis points; samples with r < 0 lie on the
    mirrored half of a curve continued through the axis.
    """

    def __init__(self, s, x, r, theta, cfg: DomainConfig, termination="reached_max_length",
                 closed=False, events=True, ode=True):
        self.s = np.asarray(s, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        if self.s.ndim != 1 or not (len(self.s) == len(self.x) == len(self.r) == len(self.theta)):
            raise ValueError("sample arrays must be 1-d and of equal length")
        if len(self.s) > 1 and np.any(np.diff(self.s) <= 0):
            raise ValueError("samples must be strictly increasing in s")
        if termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {termination!r}")
        self.cfg = cfg
        self.alpha = cfg.alpha
        self.termination = termination
        self.closed = closed
        # samples lie on a solution of the geodesic system (as opposed to an arbitrary polyline)
        self.ode = ode
        self._derive()
        self.flags = _line_flags(self)
        self.events = detect_events(self, cfg) if events and len(self.s) > 1 else []

    def _derive(self):
        d = derived_scalars(self.x, self.r, self.theta, self.alpha)
        self._cos, self._sin = d["cos"], d["sin"]
        self.Lambda, self.kappa = d["Lambda"], d["kappa"]
        self.Psi, self.Phi, self.H = d["Psi"], d["Phi"], d["H"]

    def __len__(self):
        return len(self.s)

    @property
    def length(self):
        return float(self.s[-1] - self.s[0])

    @property
    def samples(self):
        return [GeodesicState(*v) for v in zip(self.s.tolist(), self.x.tolist(),
                                               self.r.tolist(), self.theta.tolist())]

    def positions(self):
        return np.column_stack([self.x, self.r])

    def tangent(self, i):
        return self._cos[i], self._sin[i]

    def state_at(self, s) -> GeodesicState:
        """Dense evaluation at arclength s."""
        n = len(self.s)
        if not self.s[0] <= s <= self.s[-1]:
            raise ValueError(f"s={s} outside [{self.s[0]}, {self.s[-1]}]")
        i = int(np.searchsorted(self.s, s, side="right")) - 1
        i = min(max(i, 0), n - 2)
        h = s - self.s[i]
        if h == 0.0:
            return GeodesicState(float(s), self.x[i], self.r[i], self.theta[i])
        if h == self.s[i + 1] - self.s[i]:
            j = i + 1
            return GeodesicState(float(s), self.x[j], self.r[j], self.theta[j])
        if self.ode and self.r[i] != 0 and self.r[i + 1] != 0 and (self.alpha == 0 or self.r[i] * self.r[i + 1] > 0):
            y = _restep((self.x[i], self.r[i], self.theta[i]), h, self.alpha, self.cfg.max_step)
            return GeodesicState(float(s), *y)
        return GeodesicState(float(s), *self._hermite(i, h))

    def _hermite(self, i, h):
        j = i + 1
        d = self.s[j] - self.s[i]
        t = h / d
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        out = []
        for v, dv in ((self.x, self._cos), (self.r, self._sin), (self.theta, self.kappa)):
            out.append(h00 * v[i] + h10 * d * dv[i] + h01 * v[j] + h11 * d * dv[j])
        return tuple(float(v) for v in out)

    def event_kinds(self, kind):
        return [e for e in self.events if e.kind == kind]

    def truncated(self, s_end):
        """Copy restricted to s <= s_end (with an interpolated final sample)."""
        k = int(np.searchsorted(self.s, s_end, side="right"))
        s, x, r, t = (v[:k].tolist() for v in (self.s, self.x, self.r, self.theta))
        if s[-1] < s_end:
            st = self.state_at(s_end)
            s.append(st.s)
            x.append(st.x)
            r.append(st.r)
            t.append(st.theta)
        return ProfileCurve(s, x, r, t, self.cfg, termination=self.termination, ode=self.ode)


def _line_flags(curve):
    flags = {}
    if len(curve.s) < 2:
        return flags
    if np.max(np.abs(curve._sin)) <= _LINE_TOL:
        rc = math.sqrt(2 * curve.alpha)
        if np.max(np.abs(np.abs(curve.r) - rc)) <= 1e-9:
            flags["degenerate_line"] = "cylinder"
        else:
            flags["degenerate_line"] = "horizontal_line"
    elif np.max(np.abs(curve._cos)) <= _LINE_TOL and np.max(np.abs(curve.x)) <= _LINE_TOL:
        flags["degenerate_line"] = "r_axis"
    return flags


def integrate_geodesic(init, max_length, window: Optional[Window] = None,
                       cfg: Optional[DomainConfig] = None, *, through_axis=False,
                       stop: Optional[Callable] = None, events=True) -> ProfileCurve:
    """Integrate the geodesic through ``init`` for arclength ``max_length``.

    init may be a GeodesicState or an (x, r, theta) triple.  A start on the axis
    (r == 0) must be orthogonal to it.  With through_axis=True a curve reaching the
    axis continues as its mirror image (r < 0).  ``stop(x, r, theta)`` ends the curve
    at its first sign change.
    """
    cfg = cfg or DomainConfig()
    window = window or Window()
    if not isinstance(init, GeodesicState):
        init = GeodesicState(0.0, *map(float, init))
    if not max_length > 0:
        raise ConfigError("max_length must be positive")
    a = cfg.alpha
    s0 = init.s
    s_end = s0 + max_length
    run = _Run()
    y = (init.x, init.r, init.theta)
    if init.r == 0 and a > 0:
        if abs(math.cos(init.theta)) > 1e-12:
            raise DomainError("a curve starting on the axis must leave it orthogonally")
        rho = 1.0 if math.sin(init.theta) > 0 else -1.0
        run.push(s0, y)
        y = _start_from_axis(init.x, rho, init.theta, cfg)
        s0 += cfg.r_axis_eps
    elif init.r < 0 and a > 0 and not through_axis:
        raise DomainError(f"initial radius must be >= 0, got {init.r}")
    while True:
        _march(s0, y, s_end, cfg, window, stop=stop, run=run)
        if run.reason != "hit_axis":
            break
        xb, approach, _ = run.axis
        s_here, th_here = run.s[-1], run.t[-1]
        rho = 1.0 if run.r[-1] > 0 else -1.0
        for ds, xx, rr, tt in approach:
            run.push(s_here + ds, (xx, rr, tt))
        if not approach:
            # fallback snap
            th_axis = rho * (-0.5 * math.pi)
            th_axis += 2 * math.pi * round((th_here - th_axis) / (2 * math.pi))
            run.push(s_here + abs(run.r[-1]), (xb, 0.0, th_axis))
        else:
            run.r[-1] = 0.0
        if stop is not None and _stop_in_tail(run, stop, len(approach) + 2, cfg):
            break
        if run.s[-1] > s_end:
            k = int(np.searchsorted(run.s, s_end, side="right"))
            if run.s[k - 1] < s_end:
                tmp = ProfileCurve(run.s[k - 1:k + 1], run.x[k - 1:k + 1], run.r[k - 1:k + 1],
                                   run.t[k - 1:k + 1], cfg, events=False)
                end_state = tmp.state_at(s_end)
            else:
                end_state = None
            for lst in (run.s, run.x, run.r, run.t):
                del lst[k:]
            if end_state is not None:
                run.push(s_end, end_state[1:])
            run.reason = "reached_max_length"
            break
        if not through_axis or run.s[-1] >= s_end:
            break
        # continue as the mirror image
        s0 = run.s[-1] + cfg.r_axis_eps
        y = _start_from_axis(xb, -rho, run.t[-1], cfg)
        if s0 >= s_end:
            break
    return ProfileCurve(run.s, run.x, run.r, run.t, cfg, termination=run.reason, events=events)


def _start_from_axis(xb, rho, th_axis, cfg):
    xx, rr, tf = _axis_taylor(xb, cfg.r_axis_eps, cfg.alpha)
    th = rho * tf
    th += 2 * math.pi * round((th_axis - rho * 0.5 * math.pi) / (2 * math.pi))
    return xx, rho * rr, th


def _stop_in_tail(run, stop, k, cfg):
    """Check the last k appended samples for a stop crossing; truncate there if found."""
    n = len(run.s)
    lo = max(0, n - k)
    vals = [stop(run.x[i], run.r[i], run.t[i]) for i in range(lo, n)]
    for j in range(1, len(vals)):
        g0, g1 = vals[j - 1], vals[j]
        if g0 != 0 and (g1 == 0 or (g0 > 0) != (g1 > 0)):
            i = lo + j
            tmp = ProfileCurve(run.s[i - 1:i + 1], run.x[i - 1:i + 1], run.r[i - 1:i + 1],
                               run.t[i - 1:i + 1], cfg, events=False)
            sc = brentq(lambda ss: stop(*tmp.state_at(ss)[1:]), run.s[i - 1], run.s[i],
                        xtol=1e-15)
            st = tmp.state_at(sc)
            for lst in (run.s, run.x, run.r, run.t):
                del lst[i:]
            run.push(st.s, (st.x, st.r, st.theta))
            run.reason = "stop_condition"
            return True
    return False


# ---------------------------------------------------------------------------
# events

def _event_values(curve):
    c, sn = curve._cos, curve._sin
    out = {}
    flag = curve.flags.get("degenerate_line")
    if flag != "r_axis":
        out["vertical"] = c
        out["raxis_crossing"] = curve.x
    if flag not in ("cylinder", "horizontal_line"):
        out["horizontal"] = sn
        if curve.alpha > 0:
            out["cylinder_crossing"] = np.abs(curve.r) - math.sqrt(2 * curve.alpha)
    if curve.alpha == 0:
        out["axis_hit"] = curve.r
    return out


def _scalar(kind, st, alpha):
    if kind == "vertical":
        return math.cos(st.theta) if st.r != 0 else 0.0
    if kind == "horizontal":
        return math.sin(st.theta)
    if kind == "raxis_crossing":
        return st.x
    if kind == "cylinder_crossing":
        return abs(st.r) - math.sqrt(2 * alpha)
    return st.r


def detect_events(curve: ProfileCurve, cfg: Optional[DomainConfig] = None):
    """Locate every sign change of cos(theta), sin(theta), x and |r| - sqrt(2 alpha).

    Zeros at samples count once per run of zero samples; sign changes between samples are
    refined by root finding on the dense output.  Axis points produce an axis_hit and a
    vertical event.  Returns events ordered by s.
    """
    cfg = cfg or curve.cfg
    events = []
    n = len(curve.s)
    last = n - 1 if not curve.closed else n - 2
    for kind, v in _event_values(curve).items():
        zero = np.abs(v) <= 1e-15
        for i in range(last + 1):
            if zero[i]:
                if i == 0 or not zero[i - 1]:
                    events.append(Event(kind, float(curve.s[i]), float(curve.x[i]),
                                        float(curve.r[i]), float(curve.theta[i]), 0.0))
                continue
            if i < last and not zero[i + 1] and (v[i] > 0) != (v[i + 1] > 0):
                fn = lambda ss: _scalar(kind, curve.state_at(ss), curve.alpha)
                try:
                    sc = brentq(fn, curve.s[i], curve.s[i + 1], xtol=1e-14, rtol=1e-15)
                except ValueError:
                    # dense output disagrees with the samples: fall back to linear
                    sc = curve.s[i] + (curve.s[i + 1] - curve.s[i]) * v[i] / (v[i] - v[i + 1])
                st = curve.state_at(sc)
                events.append(Event(kind, st.s, st.x, st.r, st.theta, abs(_scalar(kind, st, curve.alpha))))
    if curve.alpha > 0:
        for i in np.nonzero(curve.r == 0)[0]:
            if curve.closed and i == n - 1:
                continue
            events.append(Event("axis_hit", float(curve.s[i]), float(curve.x[i]), 0.0,
                                float(curve.theta[i]), 0.0))
    order = {k: j for j, k in enumerate(EVENT_KINDS)}
    events.sort(key=lambda e: (e.s, order[e.kind]))
    return events


# ---------------------------------------------------------------------------
# graph view

@dataclass
class GraphArc:
    """Maximal stretch of a curve that is a graph r = u(x).

    x, u, du are the interior samples ordered by increasing x.  The arc ends at
    vertical points where left_vertical/right_vertical are set (in x order) and at
    the curve's ends otherwise.
    """
    s_start: float
    s_end: float
    orientation: int
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    x_left: float
    x_right: float
    left_vertical: bool
    right_vertical: bool
    raxis_crossings: int = 0
    horizontal_points: int = 0

    @property
    def maximal(self):
        return self.left_vertical and self.right_vertical

    @property
    def contains_raxis(self):
        return self.raxis_crossings > 0 or (self.x_left < 0 < self.x_right)


def graph_view(curve: ProfileCurve):
    cuts = [e for e in curve.events if e.kind == "vertical"]
    bounds = [(curve.s[0], False)] + [(e.s, True) for e in cuts] + [(curve.s[-1], False)]
    # a vertical event at the very start or end just marks that end as vertical
    merged = []
    for b in bounds:
        if merged and abs(b[0] - merged[-1][0]) <= 1e-13:
            merged[-1] = (merged[-1][0], merged[-1][1] or b[1])
        else:
            merged.append(b)
    arcs = []
    for (s0, v0), (s1, v1) in zip(merged[:-1], merged[1:]):
        inside = (curve.s > s0) & (curve.s < s1)
        idx = np.nonzero(inside)[0]
        if len(idx):
            ori = 1 if curve._cos[idx[len(idx) // 2]] > 0 else -1
        else:
            ori = 1 if math.cos(curve.state_at(0.5 * (s0 + s1)).theta) > 0 else -1
        x = curve.x[idx]
        u = curve.r[idx]
        du = curve._sin[idx] / curve._cos[idx] if len(idx) else np.empty(0)
        p0, p1 = curve.state_at(s0), curve.state_at(s1)
        if ori < 0:
            x, u, du = x[::-1], u[::-1], du[::-1]
            xl, xr, vl, vr = p1.x, p0.x, v1, v0
        else:
            xl, xr, vl, vr = p0.x, p1.x, v0, v1
        nx = sum(1 for e in curve.events if e.kind == "raxis_crossing" and s0 <= e.s <= s1)
        nh = sum(1 for e in curve.events if e.kind == "horizontal" and s0 < e.s < s1)
        arcs.append(GraphArc(float(s0), float(s1), ori, x, u, du, float(xl), float(xr),
                             bool(vl), bool(vr), nx, nh))
    return arcs
