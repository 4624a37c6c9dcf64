"""The linearization of the r-graph equation at the plane.

Writing the ends near the plane as x = f(r) with f ~ sigma_hat * g, g solves

    g'' = (r/2 - alpha/r) g' - g/2

and has asymptotic slope 1.  For large r, g has the asymptotic expansion
g = r + sum_{j odd < 0} c_j r^j with c_j = 2 (j+2)(j+1+alpha) c_{j+2} / (j-1); the
other solution grows like exp(r^2/4), so the backward integration from r_max is
stable.  g is also characterized by the identity

    g(r) = r - alpha r int_r^inf t^-2 int_t^inf g'(s) exp((t^2 - s^2)/4) ds dt.

Differentiating it gives the pointwise relation g = r g' - alpha J(r) with
J(r) = int_r^inf g'(s) exp((r^2 - s^2)/4) ds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .ends import EndSolverConfig, _outer_with_tail, solve_end
from .errors import ConfigError, DomainError, NoConvergence
from .geodesic import DomainConfig, integrate_geodesic, Window
from .kernel import ExpKernel, backward_flow_defect, gl_cumulative_right, hermite_spline


def series_coefficients(alpha, n_terms=12):
    """[(j, c_j)] for j = 1, -1, -3, ... of the large-r expansion with c_1 = 1."""
    out = [(1, 1.0)]
    c = 1.0
    for k in range(1, n_terms):
        j = 1 - 2 * k
        c = 2.0 * (j + 2) * (j + 1 + alpha) * c / (j - 1)
        out.append((j, c))
    return out


def series_eval(alpha, r, n_terms=12):
    """(g, g', g'') from the asymptotic expansion, truncated before its smallest term."""
    r = np.asarray(r, dtype=float)
    g = np.zeros_like(r)
    dg = np.zeros_like(r)
    ddg = np.zeros_like(r)
    prev = np.full_like(r, np.inf)
    live = np.ones(r.shape, dtype=bool)
    for j, c in series_coefficients(alpha, n_terms):
        term = c * r ** j
        live &= np.abs(term) < prev
        prev = np.abs(term)
        g += np.where(live, term, 0.0)
        dg += np.where(live, j * c * r ** (j - 1), 0.0)
        ddg += np.where(live, j * (j - 1) * c * r ** (j - 2), 0.0)
    return g, dg, ddg


def linearized_second(r, g, dg, alpha):
    return (0.5 * r - alpha / r) * dg - 0.5 * g


@dataclass
class LinearizedSolution:
    alpha: float
    r: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    slope: float = 1.0
    seed_terms: int = 12
    identity_residual: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def r_max(self):
        return float(self.r[-1])

    def spline(self):
        return hermite_spline(self.r, self.g, self.dg, self.ddg)

    def __call__(self, r, nu=0):
        return self.spline()(r, nu)

    def scaled(self, lam):
        return LinearizedSolution(self.alpha, self.r, lam * self.g, lam * self.dg,
                                  lam * self.ddg, lam * self.slope, self.seed_terms)

    def extended(self, r_far=1000.0, dlog=0.01):
        """Grid data continued beyond r_max by the asymptotic expansion."""
        R = self.r_max
        n = max(2, int(math.ceil(math.log(r_far / R) / dlog)))
        rt = np.geomspace(R, r_far, n + 1)[1:]
        g, dg, ddg = (self.slope * w for w in series_eval(self.alpha, rt, self.seed_terms))
        return (np.concatenate([self.r, rt]), np.concatenate([self.g, g]),
                np.concatenate([self.dg, dg]), np.concatenate([self.ddg, ddg]))

    def sign_changes(self):
        s = np.sign(self.g)
        s = s[s != 0]
        return int(np.count_nonzero(s[1:] != s[:-1]))

    def zero(self):
        """The first r with g(r) = 0 (nan if g keeps one sign)."""
        i = np.nonzero(np.sign(self.g[1:]) != np.sign(self.g[:-1]))[0]
        if not len(i):
            return math.nan
        sp = self.spline()
        from scipy.optimize import brentq
        return float(brentq(sp, self.r[i[0]], self.r[i[0] + 1], xtol=1e-15))

    def defect(self, r_lo=0.01):
        """Sup-norm flow defect of the ODE on the nodes with r >= r_lo."""
        m = self.r >= r_lo * (1 - 1e-12)
        a = self.alpha
        return backward_flow_defect(self.r[m], self.g[m], self.dg[m],
                                    lambda r, g, dg: linearized_second(r, g, dg, a),
                                    lambda r, g, dg: np.abs(0.5 * r - a / r))


def linearized_grid(r_min=1e-3, r_max=40.0, h=0.05, n_geom=80):
    geo = np.geomspace(r_min, 1.0, n_geom + 1)
    n = int(round((r_max - 1.0) / h))
    return np.concatenate([geo, np.linspace(1.0, r_max, n + 1)[1:]])


def solve_linearized(alpha=1.0, r_max=40.0, r_min=1e-3, h=0.05, slope=1.0, rtol=1e-13,
                     atol=1e-13, seed_terms=12) -> LinearizedSolution:
    """Backward integration from r_max seeded by the asymptotic expansion."""
    if not alpha > 0:
        raise DomainError("the linearized problem needs alpha > 0")
    if not 0 < r_min < 1.0 < r_max:
        raise ConfigError("need 0 < r_min < 1 < r_max")
    r = linearized_grid(r_min, r_max, h)
    g0, dg0, _ = series_eval(alpha, np.array([r_max]), seed_terms)

    def f(x, y):
        return [y[1], (0.5 * x - alpha / x) * y[1] - 0.5 * y[0]]

    def jac(x, y):
        return [[0.0, 1.0], [-0.5, 0.5 * x - alpha / x]]

    sol = solve_ivp(f, (r_max, r_min), [slope * g0[0], slope * dg0[0]], method="Radau",
                    jac=jac, rtol=rtol, atol=atol, t_eval=r[::-1])
    if sol.status != 0:
        raise NoConvergence(f"step_underflow near r = {sol.t[-1]:.3g}: {sol.message}")
    g, dg = sol.y[0][::-1], sol.y[1][::-1]
    ddg = linearized_second(r, g, dg, alpha)
    out = LinearizedSolution(alpha, r, g, dg, ddg, slope, seed_terms)
    out.info["seed"] = {"r_max": r_max, "c": series_coefficients(alpha, 4)}
    return out


def identity_residual(alpha, r, g, dg, ddg, window, slope=1.0, tail_eps=1e-14):
    """sup |g - [slope r - alpha r K(r)]| over nodes in window, on grid data reaching far out.

    Returns (residual, nodes, identity value at nodes).
    """
    r = np.asarray(r, dtype=float)
    sp = hermite_spline(r, g, dg, ddg)
    dsp = sp.derivative()
    kern = ExpKernel(None, 0.0, tail_eps, x_end=float(r[-1]))
    sel = (r >= window[0]) & (r <= window[1])
    re = r[sel]
    _, K, _ = _outer_with_tail(kern, r, lambda s: 2.0 * dsp(s) / s, re)
    rhs = slope * re - alpha * re * K
    return float(np.max(np.abs(np.asarray(g)[sel] - rhs))), re, rhs


def linearized_identity_residual(sol: LinearizedSolution, window=None, r_far=1000.0,
                                 dlog=0.01, tail_eps=1e-14):
    """Identity residual of a computed solution on [0.1, r_max/2] (default window)."""
    window = window or (0.1, 0.5 * sol.r_max)
    r, g, dg, ddg = sol.extended(r_far, dlog)
    res, _, _ = identity_residual(sol.alpha, r, g, dg, ddg, window, sol.slope, tail_eps)
    return res


def refined_identity_residual(sol: LinearizedSolution, window=None):
    """The same residual with doubled outer and series resolution (quadrature cross-check)."""
    window = window or (0.1, 0.5 * sol.r_max)
    r, g, dg, ddg = sol.extended(1000.0, 0.005)
    mid = 0.5 * (r[1:] + r[:-1])
    sp = hermite_spline(r, g, dg, ddg)
    rr = np.sort(np.concatenate([r, mid]))
    res, _, _ = identity_residual(sol.alpha, rr, sp(rr), sp(rr, 1), sp(rr, 2), window,
                                  sol.slope, 1e-16)
    return res


@dataclass
class LimitReport:
    r: np.ndarray            # probe radii, decreasing
    g: np.ndarray
    limit_integral: np.ndarray   # -alpha int_r^inf g'(s) exp(-s^2/4) ds
    mismatch: np.ndarray     # g - limit_integral
    r_dg: np.ndarray         # r g'(r)
    pointwise: np.ndarray    # g - (r g' - alpha J(r)), zero for a solution
    tol: float

    @property
    def limit_ok(self):
        return bool(abs(self.mismatch[-1]) < self.tol)


def limit_check(sol: LinearizedSolution, radii=(1e-1, 1e-2, 1e-3), tol=1e-5) -> LimitReport:
    """Compare g(r) with -alpha int_r^inf g' exp(-s^2/4) ds as r -> 0.

    Also evaluates the exact relation g = r g' - alpha J(r) at the probe radii; the
    difference between the two sides of the limit statement is r g' + O(r^2 log r).
    """
    r, g, dg, ddg = sol.extended()
    sp = hermite_spline(r, g, dg, ddg)
    dsp = sp.derivative()
    a = sol.alpha
    rad = np.array(sorted(radii, reverse=True), dtype=float)
    if rad[-1] < r[0]:
        raise ConfigError("probe radius below the solution grid")
    knots = np.unique(np.concatenate([r, rad]))
    cum = gl_cumulative_right(knots, lambda t: dsp(t) * np.exp(-0.25 * t * t))
    tail = float(sp(knots[-1], 1)) * 0.0  # exp(-r_far^2/4) underflows
    E = np.interp(rad, knots, cum) + tail
    L = -a * E
    gv = sp(rad)
    rdg = rad * dsp(rad)
    J = np.exp(0.25 * rad * rad) * E
    return LimitReport(rad, gv, L, gv - L, rdg, gv - (rdg - a * J), tol)


def trap_check(alpha, r0, g0, dg0, r_end=30.0):
    """Forward from (r0, g0 > 0, g'(r0) = dg0 <= 0): is g' < 0 wherever g > 0 after r0?

    Returns (holds, r_stop) where r_stop is where g hit 0 or r_end.
    """
    if not (g0 > 0 and dg0 <= 0 and r0 > 0):
        raise ConfigError("trap check needs g0 > 0, dg0 <= 0, r0 > 0")

    def f(x, y):
        return [y[1], (0.5 * x - alpha / x) * y[1] - 0.5 * y[0]]

    def hit(x, y):
        return y[0]
    hit.terminal = True
    hit.direction = -1

    sol = solve_ivp(f, (r0, r_end), [g0, dg0], method="DOP853", rtol=1e-11, atol=1e-13,
                    events=hit, dense_output=True, max_step=0.01)
    rs = sol.t[1:]
    gs, dgs = sol.y[0][1:], sol.y[1][1:]
    pos = gs > 0
    holds = bool(np.all(dgs[pos] < 0))
    return holds, float(sol.t[-1])


def trap_violations(r, g, dg):
    """Nodes after a node with g > 0, g' <= 0 where g > 0 but g' >= 0 again."""
    r, g, dg = map(np.asarray, (r, g, dg))
    start = np.nonzero((g > 0) & (dg <= 0))[0]
    if not len(start):
        return []
    i0 = start[0]
    after = np.arange(len(r)) > i0
    bad = after & (g > 0) & (dg >= 0)
    return r[bad].tolist()


# ---------------------------------------------------------------------------
# link to the family of ends

def _end_r_inverse(end, r_nodes):
    """x = f(r), f'(r) at the given radii, by Newton on the end's spline."""
    sp = end.spline()
    dsp = sp.derivative()
    x = np.interp(r_nodes, end.u, end.x)
    for _ in range(50):
        dx = (sp(x) - r_nodes) / dsp(x)
        x = np.clip(x - dx, end.x[0], end.x[-1])
        if np.max(np.abs(dx)) < 1e-15:
            break
    return x, 1.0 / dsp(x)


@dataclass
class SigmaLimitReport:
    sigma_hats: list
    errors: list
    orders: list
    window: tuple
    envelope_sigma_hat: float
    envelope_ok: bool
    envelope_margin: float
    sign_r0: float
    sign_f: float
    sign_g: float
    sign_portrait_ok: bool
    u0: list

    def record(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def backward_extension(end, cfg: DomainConfig, max_length=20.0):
    """Continue an end past x = 0 (toward negative x) up to its horizontal point."""
    th0 = math.atan(float(end.du[0]))
    return integrate_geodesic((0.0, end.u0, th0 + math.pi), max_length, Window(), cfg,
                              stop=lambda x, r, t: math.sin(t), events=False)


def sigma_limit_check(cfg: Optional[DomainConfig] = None, ecfg: Optional[EndSolverConfig] = None,
                      sigma_hats=(0.25, 0.125, 0.0625), window=(3.0, 10.0), n_window=141,
                      sol: Optional[LinearizedSolution] = None, envelope_sigma_hat=0.125,
                      ends=None) -> SigmaLimitReport:
    """Compare f_{sigma_hat}/sigma_hat with g on a fixed r-window as sigma_hat -> 0."""
    cfg = cfg or DomainConfig()
    a = cfg.alpha
    sol = sol or solve_linearized(a)
    gsp = sol.spline()
    rw = np.linspace(window[0], window[1], n_window)
    ends = dict(ends or {})
    errs, u0s = [], []
    env_ok, env_margin = False, math.nan
    sign = (math.nan, math.nan, math.nan, False)
    for sh in sigma_hats:
        end = ends.get(sh) or solve_end(1.0 / sh, cfg, ecfg)
        ends[sh] = end
        u0s.append(end.u0)
        if end.u0 > window[0] or end.u[-1] < window[1]:
            raise ConfigError("window not graphical over r for this sigma")
        f, df = _end_r_inverse(end, rw)
        errs.append(float(np.max(np.abs(f / sh - gsp(rw)))))
        if sh == envelope_sigma_hat:
            m = rw > 1.5 * math.sqrt(2 * a)
            bound = 1.0 / (1.0 - 2 * a / rw[m] ** 2)
            env_margin = float(np.min(bound - df[m] / sh))
            env_ok = bool(env_margin > 0)
    # sign portrait on the smallest sigma_hat
    sh = min(sigma_hats)
    ext = backward_extension(ends[sh], cfg)
    xs, rs = ext.x, ext.r
    keep = xs < 0
    if keep.any():
        rk, xk = rs[keep], xs[keep]
        o = np.argsort(rk)
        r0 = 0.5 * (float(rk.min()) + float(ends[sh].u0))
        f0 = float(np.interp(r0, rk[o], xk[o]))
        g0 = float(gsp(r0)) if r0 >= sol.r[0] else math.nan
        sign = (r0, f0, g0, bool(f0 < 0 and g0 < 0))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return SigmaLimitReport(list(sigma_hats), errs, orders, tuple(window), envelope_sigma_hat,
                            env_ok, env_margin, sign[0], sign[1], sign[2], sign[3], u0s)
