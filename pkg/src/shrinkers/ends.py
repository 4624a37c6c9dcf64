"""Conical ends: graphs r = u(x) asymptotic to the cone r = sigma*x.

Two independent constructions are provided.

* IVP route: u_{sigma,a} solves the graph equation backward from u(a) = sigma*a,
  u'(a) = sigma.  The family converges as a -> infinity with error O(a^-2), so the
  anchor values at x = X_max are Richardson-extrapolated in 1/a^2 and a final backward
  solve from X_max gives the end on [0, X_max].
* Fixed-point route: v = u - sigma*x is the fixed point of the integral operator

      T v(x) = 2 alpha x int_x^inf t^-2 I(t) dt,
      I(t) = int_t^inf Q'(s) exp(-(Q(s) - Q(t))) / u(s) ds,   Q' = (s/2)(1 + u'^2),

  iterated on [b, X_far].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, GridTooShort, InvariantViolation, NoConvergence
from .geodesic import DomainConfig, ProfileCurve, integrate_geodesic, Window
from .kernel import (ExpKernel, backward_flow_defect, gl_cumulative_right, hermite_spline,
                     power_tail)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EndSolverConfig:
    x_max: float = 50.0
    grid_h: float = 0.05
    grid_geom_min: float = 1e-3
    grid_geom_n: int = 30
    a_schedule: Optional[tuple] = None   # default: 2*x_max * 2^k, k = 0..max_doublings
    max_doublings: int = 8
    min_doublings: int = 2
    richardson_tol: float = 1e-8
    ivp_rtol: float = 1e-13
    ivp_atol: float = 1e-13
    picard_b: Optional[float] = None
    picard_x_far: float = 1000.0
    picard_dlog: float = 0.01
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    picard_b_retries: int = 4
    quad_tail_eps: float = 1e-14
    tail_x_far: float = 1000.0

    def __post_init__(self):
        for name in ("x_max", "grid_h", "grid_geom_min", "richardson_tol", "ivp_rtol",
                     "ivp_atol", "picard_x_far", "picard_dlog", "picard_tol",
                     "quad_tail_eps", "tail_x_far"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.grid_geom_min >= 1.0 or self.x_max <= 1.0:
            raise ConfigError("grid needs grid_geom_min < 1 < x_max")
        if self.a_schedule is not None:
            a = np.asarray(self.a_schedule, dtype=float)
            if len(a) < 2 or np.any(a <= 0) or np.any(np.diff(a) <= 0):
                raise ConfigError("a_schedule must be positive and strictly increasing")
            if a[0] < self.x_max:
                raise ConfigError("anchors must lie at or beyond x_max")
        if self.min_doublings < 1 or self.max_doublings < self.min_doublings:
            raise ConfigError("need 1 <= min_doublings <= max_doublings")

    def anchors(self):
        if self.a_schedule is not None:
            return [float(a) for a in self.a_schedule]
        a0 = 2.0 * self.x_max
        return [a0 * 2.0 ** k for k in range(self.max_doublings + 1)]

    def grid(self):
        """0, geometric nodes up to 1, then uniform spacing grid_h up to x_max."""
        geo = np.geomspace(self.grid_geom_min, 1.0, self.grid_geom_n)
        n = int(round((self.x_max - 1.0) / self.grid_h))
        uni = 1.0 + (self.x_max - 1.0) * np.arange(1, n + 1) / n
        return np.concatenate([[0.0], geo, uni])


def picard_b_rule(sigma, alpha):
    return max(4.0, math.sqrt(8.0 * alpha * (1.0 + sigma * sigma)) / sigma)


def _check_sigma(sigma):
    if not (isinstance(sigma, (int, float)) and math.isfinite(sigma)) or sigma <= 0:
        raise ConfigError("sigma must be positive")


# ---------------------------------------------------------------------------
# graph ODE in first-order form

def _ssode(alpha):
    rc = math.sqrt(2.0 * alpha)

    def gap(u):
        return (rc - u) * (rc + u) / (2.0 * u) if alpha else -0.5 * u

    def f(x, y):
        u, du = y
        return np.array([du, (0.5 * x * du + gap(u)) * (1.0 + du * du)])

    def jac(x, y):
        u, du = y
        p = 1.0 + du * du
        phi = 0.5 * x * du + gap(u)
        return np.array([[0.0, 1.0],
                         [(-(alpha / (u * u) if alpha else 0.0) - 0.5) * p,
                          0.5 * x * p + 2.0 * du * phi]])

    return f, jac, gap


def ssode_second(x, u, du, alpha):
    """Vectorized u'' from the graph equation."""
    x, u, du = (np.asarray(v, dtype=float) for v in (x, u, du))
    if alpha:
        rc = math.sqrt(2.0 * alpha)
        gap = (rc - u) * (rc + u) / (2.0 * u)
    else:
        gap = -0.5 * u
    return (0.5 * x * du + gap) * (1.0 + du * du)


def _radau(alpha, x0, y0, x1, ecfg, t_eval=None, dense=False):
    f, jac, _ = _ssode(alpha)
    sol = solve_ivp(f, (x0, x1), y0, method="Radau", jac=jac, rtol=ecfg.ivp_rtol,
                    atol=ecfg.ivp_atol, t_eval=t_eval, dense_output=dense)
    if sol.status != 0:
        raise NoConvergence(f"graph IVP failed between x={x0:g} and x={x1:g}: {sol.message}")
    return sol


@dataclass
class EndIVP:
    """u_{sigma,a} tabulated on a grid (ascending x)."""
    sigma: float
    a: float
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    envelope_margin: float   # min over x >= 1 of 2 alpha/(sigma x) - |u - sigma x|


def solve_end_ivp(sigma, a, cfg: DomainConfig, ecfg: Optional[EndSolverConfig] = None,
                  x_eval=None) -> EndIVP:
    """u_{sigma,a}: backward solve of the graph equation from u(a) = sigma a, u'(a) = sigma."""
    _check_sigma(sigma)
    if not a > 0:
        raise ConfigError("anchor a must be positive")
    ecfg = ecfg or EndSolverConfig()
    alpha = cfg.alpha
    if x_eval is None:
        n = max(2, int(math.ceil(a / ecfg.grid_h)))
        x_eval = np.linspace(0.0, a, n + 1)
    x_eval = np.asarray(x_eval, dtype=float)
    if alpha == 0:
        u = sigma * x_eval
        du = np.full_like(x_eval, sigma)
    else:
        sol = _radau(alpha, a, [sigma * a, sigma], 0.0, ecfg, t_eval=x_eval[::-1])
        u, du = sol.y[0][::-1], sol.y[1][::-1]
    ddu = ssode_second(x_eval, u, du, alpha)
    m = x_eval >= 1.0
    margin = float(np.min(2 * alpha / (sigma * x_eval[m]) - np.abs(u[m] - sigma * x_eval[m]))) \
        if m.any() and alpha else 0.0
    return EndIVP(sigma, float(a), x_eval, u, du, ddu, margin)


# ---------------------------------------------------------------------------
# the end itself

@dataclass
class ConicalEnd:
    sigma: float
    alpha: float
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    a_used: list = field(default_factory=list)
    richardson: dict = field(default_factory=dict)
    picard: Optional[dict] = None
    residual: float = float("nan")
    flags: dict = field(default_factory=dict)

    _spline = None

    @property
    def u0(self):
        return float(self.u[0])

    def spline(self):
        if self._spline is None:
            self._spline = hermite_spline(self.x, self.u, self.du, self.ddu)
        return self._spline

    def __call__(self, x, nu=0):
        return self.spline()(x, nu)

    def tail_coefficients(self):
        """(c1, c3) with u - sigma x = c1/x + c3/x^3 matched in value and slope at x_max."""
        X = float(self.x[-1])
        v = float(self.u[-1]) - self.sigma * X
        dv = float(self.du[-1]) - self.sigma
        c3 = -0.5 * X * X * (v * X + dv * X * X)
        c1 = v * X - c3 / (X * X)
        return c1, c3

    def extended(self, x_far=1000.0, dlog=0.01):
        """Grid data continued beyond x_max by the matched asymptotic tail."""
        X = float(self.x[-1])
        if x_far <= X:
            return self.x, self.u, self.du, self.ddu
        c1, c3 = self.tail_coefficients()
        n = max(2, int(math.ceil(math.log(x_far / X) / dlog)))
        xt = np.geomspace(X, x_far, n + 1)[1:]
        ut = self.sigma * xt + c1 / xt + c3 / xt ** 3
        dut = self.sigma - c1 / xt ** 2 - 3 * c3 / xt ** 4
        ddut = 2 * c1 / xt ** 3 + 12 * c3 / xt ** 5
        return (np.concatenate([self.x, xt]), np.concatenate([self.u, ut]),
                np.concatenate([self.du, dut]), np.concatenate([self.ddu, ddut]))

    def arclength(self):
        """Arclength along the graph from x = 0 at each node."""
        dsp = self.spline().derivative()
        cum = gl_cumulative_right(self.x, lambda t: np.sqrt(1.0 + dsp(t) ** 2))
        return cum[0] - cum

    def profile_curve(self, cfg: DomainConfig) -> ProfileCurve:
        """The graph as a profile curve traversed in the direction of increasing x."""
        s = self.arclength()
        th = np.arctan(self.du)
        return ProfileCurve(s, self.x, self.u, th, cfg, termination="reached_max_length")

    def r_graph(self):
        """The same curve written as x = f(r): (r, f, f', f'') on the nodes."""
        r = self.u
        df = 1.0 / self.du
        ddf = -self.ddu / self.du ** 3
        return r, self.x.copy(), df, ddf


def cylinder_end(cfg: DomainConfig, ecfg: Optional[EndSolverConfig] = None) -> ConicalEnd:
    """The cylinder r = sqrt(2 alpha), the degenerate sigma = 0 member of the family."""
    ecfg = ecfg or EndSolverConfig()
    x = ecfg.grid()
    rc = cfg.cylinder_radius()
    z = np.zeros_like(x)
    return ConicalEnd(0.0, cfg.alpha, x, np.full_like(x, rc), z, z.copy(), residual=0.0,
                      flags={"degenerate": "cylinder"})


def _richardson(rows):
    """Richardson table for values with error expansion in powers of 1/a^2 (a doubling)."""
    T = []
    for k, v in enumerate(rows):
        row = [np.asarray(v, dtype=float)]
        for j in range(1, k + 1):
            f = 4.0 ** j
            row.append(row[j - 1] + (row[j - 1] - T[k - 1][j - 1]) / (f - 1.0))
        T.append(row)
    return T


def solve_end(sigma, cfg: DomainConfig, ecfg: Optional[EndSolverConfig] = None) -> ConicalEnd:
    """The conical end u_sigma on [0, x_max] via the anchored IVP family."""
    _check_sigma(sigma)
    ecfg = ecfg or EndSolverConfig()
    alpha = cfg.alpha
    grid = ecfg.grid()
    X = float(grid[-1])
    if alpha == 0:
        # the ray is exact for every anchor
        end = ConicalEnd(sigma, 0.0, grid, sigma * grid, np.full_like(grid, sigma),
                         np.zeros_like(grid), a_used=[], residual=0.0, flags={"degenerate": "ray"})
        return end
    anchors = ecfg.anchors()
    rows, used, diffs = [], [], []
    done = False
    for k, a in enumerate(anchors):
        sol = _radau(alpha, a, [sigma * a, sigma], 0.0, ecfg, t_eval=[X, 0.0])
        rows.append([sol.y[0][0], sol.y[1][0], sol.y[0][1]])   # u(X), u'(X), u(0)
        used.append(a)
        T = _richardson(rows)
        if k >= 1:
            d = float(abs(T[k][k][2] - T[k - 1][k - 1][2]))
            diffs.append(d)
            log.debug("sigma=%g a=%g extrapolated u(0) step %.3e", sigma, a, d)
            if k >= ecfg.min_doublings and d < ecfg.richardson_tol:
                done = True
                break
    if not done:
        raise NoConvergence(f"anchor schedule exhausted for sigma={sigma}: last u(0) "
                            f"change {diffs[-1] if diffs else float('nan'):.3e}")
    best = T[-1][-1]
    sol = _radau(alpha, X, [best[0], best[1]], 0.0, ecfg, t_eval=grid[::-1])
    u, du = sol.y[0][::-1].copy(), sol.y[1][::-1].copy()
    ddu = ssode_second(grid, u, du, alpha)
    raw0 = [float(r[2]) for r in rows]
    end = ConicalEnd(sigma, alpha, grid, u, du, ddu, a_used=used,
                     richardson={"u0_raw": raw0, "u0_extrapolated": float(best[2]),
                                 "steps": diffs, "u_xmax": float(best[0]),
                                 "du_xmax": float(best[1])})
    end.residual = flow_defect(end)
    bad = end_invariant_failures(end)
    if bad:
        raise InvariantViolation(f"sigma={sigma}: " + "; ".join(bad))
    return end


def end_invariant_failures(end: ConicalEnd):
    x, u, du, ddu, s, a = end.x, end.u, end.du, end.ddu, end.sigma, end.alpha
    out = []
    if not np.all(u > s * x):
        out.append("u > sigma x fails")
    if not u[0] < math.sqrt(2 * a):
        out.append("u(0) < sqrt(2 alpha) fails")
    inner = slice(1, -1)
    if not (np.all(du[inner] > 0) and np.all(du[inner] < s) and np.all(ddu[inner] > 0)):
        out.append("monotone convexity 0 < u' < sigma, u'' > 0 fails")
    m = x >= 1
    if np.any(np.abs(u[m] - s * x[m]) > 2 * a / (s * x[m])) or \
            np.any(np.abs(du[m] - s) > 2 * a / (s * x[m] ** 2)):
        out.append("decay envelope fails")
    return out


def flow_defect(end: ConicalEnd, substeps=None):
    """Sup-norm defect of the graph equation on the grid (see backward_flow_defect)."""
    a = end.alpha
    return backward_flow_defect(end.x, end.u, end.du,
                                lambda x, u, du: ssode_second(x, u, du, a),
                                lambda x, u, du: 0.5 * x * (1.0 + du * du), substeps)


# ---------------------------------------------------------------------------
# integral operators

@dataclass
class OperatorResult:
    x: np.ndarray          # evaluation nodes
    value: np.ndarray      # operator value (T v, or S f)
    deriv: np.ndarray
    deriv2: Optional[np.ndarray]
    inner: np.ndarray      # I at the nodes
    outer: np.ndarray      # int_x^inf t^-2 I(t) dt at the nodes
    x_trunc: float         # beyond this node the asymptotic tail fit was used


def _outer_with_tail(kern, knots, h, x_eval):
    """Inner integral I and K(x) = int_x^inf I/t^2 at x_eval (subset of knots)."""
    W = kern.W
    ok = kern.dq(knots, np.full_like(knots, kern.x1)) >= W
    if not ok.any() or not ok[np.searchsorted(knots, x_eval[0])]:
        raise GridTooShort("grid too short for the tail truncation at the requested nodes")
    last = int(np.nonzero(ok)[0][-1])
    lo = int(np.searchsorted(knots, x_eval[0]))
    kk = knots[lo:last + 1]
    f = lambda t: kern.inner(t, h) / (t * t)
    J = gl_cumulative_right(kk, f)
    Ik = kern.inner(kk, h)
    X1, X2 = kk[-2], kk[-1]
    tail_end = power_tail(X2, Ik[-2], Ik[-1], X1, X2)
    Kk = J + tail_end
    # beyond the truncation node: use the fitted A/t + B/t^3 form
    B = (Ik[-2] * X1 - Ik[-1] * X2) / (X1 ** -2 - X2 ** -2)
    A = Ik[-1] * X2 - B * X2 ** -2
    xe = np.asarray(x_eval, dtype=float)
    I = np.interp(xe, kk, Ik)
    K = np.interp(xe, kk, Kk)
    idx = np.searchsorted(kk, xe)
    exact = (idx < len(kk)) & (kk[np.minimum(idx, len(kk) - 1)] == xe)
    I = np.where(exact, Ik[np.minimum(idx, len(kk) - 1)], A / xe + B / xe ** 3)
    K = np.where(exact, Kk[np.minimum(idx, len(kk) - 1)], A / (2 * xe ** 2) + B / (4 * xe ** 4))
    return I, K, float(kk[-1])


def apply_T(sigma, x, v, dv, ddv, cfg: DomainConfig, ecfg: Optional[EndSolverConfig] = None,
            x_eval=None, check_membership=True) -> OperatorResult:
    """T_sigma applied to the tail v = u - sigma x given on knots x (values, v', v'')."""
    _check_sigma(sigma)
    ecfg = ecfg or EndSolverConfig()
    alpha = cfg.alpha
    x = np.asarray(x, dtype=float)
    v, dv, ddv = (np.asarray(w, dtype=float) for w in (v, dv, ddv))
    if check_membership:
        pos = x > 0
        if np.any(v < 0) or np.any(np.abs(dv[pos]) >= 4 * alpha / (sigma * x[pos] ** 2)):
            raise ConfigError("tail function outside the admissible set (v >= 0, "
                              "|v'| < 4 alpha/(sigma x^2))")
    sp = hermite_spline(x, v, dv, ddv)
    kern = ExpKernel(sp, sigma, ecfg.quad_tail_eps)
    h = lambda s: 1.0 / (sigma * s + sp(s))
    xe = x if x_eval is None else np.asarray(x_eval, dtype=float)
    pos = xe > 0
    I = np.empty_like(xe)
    K = np.full_like(xe, np.inf)
    I[pos], K[pos], xt = _outer_with_tail(kern, x, h, xe[pos])
    if (~pos).any():
        I[~pos] = kern.inner(xe[~pos], h)
    Tv = np.where(pos, 2 * alpha * xe * np.where(pos, K, 0.0), 2 * alpha * I)
    with np.errstate(divide="ignore", invalid="ignore"):
        dTv = np.where(pos, (Tv - 2 * alpha * I) / np.where(pos, xe, 1.0), np.nan)
    if (~pos).any():
        # limit at x = 0 from the derivative formula: (Tv)'(0) = 2 alpha (I'(0) ... ) use one-sided
        dTv[~pos] = np.nan
    uu = sigma * xe + sp(xe)
    ddTv = -alpha * kern.p(xe) * (I - 1.0 / uu)
    return OperatorResult(xe, Tv, dTv, ddTv, I, K, xt)


def picard_knots(b, ecfg):
    n = int(math.ceil(math.log(ecfg.picard_x_far / b) / ecfg.picard_dlog))
    return np.geomspace(b, ecfg.picard_x_far, n + 1)


@dataclass
class PicardResult:
    sigma: float
    b: float
    x: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    ddv: np.ndarray
    iterations: int
    steps: list
    tau_hat: float
    converged: bool
    attempts: list = field(default_factory=list)
    membership_ok: bool = True

    def u(self):
        return self.sigma * self.x + self.v

    def record(self):
        return {"b": self.b, "iterations": self.iterations, "final_step": self.steps[-1],
                "tau_hat": self.tau_hat}


def _picard_once(sigma, b, cfg, ecfg, v0=None):
    x = picard_knots(b, ecfg)
    if v0 is None:
        v = np.zeros_like(x)
        dv = np.zeros_like(x)
        ddv = np.zeros_like(x)
    else:
        v, dv, ddv = v0
    steps, member = [], True
    for it in range(1, ecfg.picard_max_iter + 1):
        res = apply_T(sigma, x, v, dv, ddv, cfg, ecfg, check_membership=False)
        if not np.all(np.isfinite(res.value)):
            return None, steps, it, member
        # C^1 step
        step = float(max(np.max(np.abs(res.value - v)), np.max(np.abs(res.deriv - dv))))
        steps.append(step)
        v, dv, ddv = res.value, res.deriv, res.deriv2
        member &= bool(np.all(v > 0) and np.all(np.abs(dv) < 4 * cfg.alpha / (sigma * x ** 2)))
        log.debug("picard sigma=%g b=%g it=%d step=%.3e", sigma, b, it, step)
        if step < ecfg.picard_tol:
            return (x, v, dv, ddv), steps, it, member
        if len(steps) >= 4 and steps[-1] > steps[-2] > steps[-3] > steps[-4]:
            return None, steps, it, member
    return None, steps, ecfg.picard_max_iter, member


def _tau_hat(steps):
    r = [steps[k + 1] / steps[k] for k in range(len(steps) - 1) if steps[k] > 0]
    return max(r) if r else 0.0


def picard_solve(sigma, cfg: DomainConfig, ecfg: Optional[EndSolverConfig] = None,
                 b: Optional[float] = None) -> PicardResult:
    """Fixed point of T_sigma on [b, X_far] by Picard iteration from v = 0."""
    _check_sigma(sigma)
    ecfg = ecfg or EndSolverConfig()
    b = b or ecfg.picard_b or picard_b_rule(sigma, cfg.alpha)
    attempts = []
    for _ in range(ecfg.picard_b_retries + 1):
        out, steps, it, member = _picard_once(sigma, b, cfg, ecfg)
        tau = _tau_hat(steps)
        attempts.append({"b": b, "iterations": it, "tau_hat": tau, "converged": out is not None})
        if out is not None and tau < 1.0:
            x, v, dv, ddv = out
            return PicardResult(sigma, b, x, v, dv, ddv, it, steps, tau, True, attempts, member)
        log.info("picard sigma=%g: no contraction from b=%g (tau=%.3g), doubling b", sigma, b, tau)
        b *= 2.0
    raise NoConvergence(f"Picard iteration for sigma={sigma} failed up to b={b / 2:g}")


def fixed_point_residual(end: ConicalEnd, cfg: DomainConfig, ecfg=None, x_lo=None):
    """C^1 norm of T v - v for v = u - sigma x of a computed end, on [x_lo, x_max]."""
    ecfg = ecfg or EndSolverConfig()
    x, u, du, ddu = end.extended(ecfg.tail_x_far)
    s = end.sigma
    x_lo = x_lo if x_lo is not None else picard_b_rule(s, cfg.alpha)
    sel = (x >= x_lo) & (x <= end.x[-1])
    res = apply_T(s, x, u - s * x, du - s, ddu, cfg, ecfg, x_eval=x[sel], check_membership=False)
    v = u[sel] - s * x[sel]
    dv = du[sel] - s
    return float(max(np.max(np.abs(res.value - v)), np.max(np.abs(res.deriv - dv)))), res


# ---------------------------------------------------------------------------
# integral identities

@dataclass
class IdentityReport:
    x: np.ndarray
    u: np.ndarray
    rhs: np.ndarray
    residual: float
    coef_linear: float       # u(a)/a
    coef_second: float       # u(a) - u'(a) a
    second_term_max: float   # max |coef_second * u2|
    homogeneous_check: float  # max |u2 (quadrature) - u2 (ODE solve of the frozen equation)|
    normalization_error: float


def evaluate_general_identity(x, u, du, ddu, x_lo, a, cfg: DomainConfig,
                              ecfg: Optional[EndSolverConfig] = None) -> IdentityReport:
    """Check the representation of a graph solution on (x_lo, a) by its data at a.

        u(x) = (u(a)/a) x + (u(a) - u'(a) a) u2(x) + 2 alpha x int_x^a t^-2 I_a(t) dt,
        u2(x) = x int_x^a exp(-(Q(a) - Q(s))) s^-2 ds,
        I_a(t) = int_t^a Q'(s) exp(-(Q(s) - Q(t))) / u(s) ds.

    The data (x, u, u', u'') must cover [x_lo, a].
    """
    ecfg = ecfg or EndSolverConfig()
    alpha = cfg.alpha
    x = np.asarray(x, dtype=float)
    sp = hermite_spline(x, u, du, ddu)
    kern = ExpKernel(sp, 0.0, ecfg.quad_tail_eps)
    h = lambda s: 1.0 / sp(s)
    nodes = x[(x >= x_lo) & (x <= a)]
    if nodes[-1] != a:
        raise ConfigError("a must be a grid node")
    ua, dua = float(sp(a)), float(sp(a, 1))
    c1, c2 = ua / a, ua - dua * a
    Ia = lambda t: kern.inner(t, h, upper=a)
    J = gl_cumulative_right(nodes, lambda t: Ia(t) / (t * t))
    E = lambda s: np.exp(-kern.dq(s, np.full_like(s, a)))
    A2 = gl_cumulative_right(nodes, lambda s: E(s) / (s * s))
    u2 = nodes * A2
    rhs = c1 * nodes + c2 * u2 + 2 * alpha * nodes * J
    uu = sp(nodes)
    # u2 is the solution of the frozen equation w'' = p (x w' - w)/2 with w(a) = 0,
    # w'(a) = -1/a; compare the quadrature form against a direct solve
    fz = lambda s, y: [y[1], 0.5 * kern.p(s) * (s * y[1] - y[0])]
    ode = solve_ivp(fz, (a, nodes[0]), [0.0, -1.0 / a], method="Radau", rtol=1e-12,
                    atol=1e-14, t_eval=nodes[::-1])
    hom = float(np.max(np.abs(ode.y[0][::-1] - u2)))
    norm = float(np.max(np.abs(kern.normalization(nodes[:-1], upper=a)
                               - (1.0 - np.exp(-kern.dq(nodes[:-1], np.full(len(nodes) - 1, a)))))))
    return IdentityReport(nodes, uu, rhs, float(np.max(np.abs(rhs - uu))), c1, c2,
                          float(np.max(np.abs(c2 * u2))), float(hom), norm)


def magic_long_residual(end: ConicalEnd, x_lo, x_hi, cfg: DomainConfig, ecfg=None):
    """max |u - sigma x - T v| on [x_lo, x_hi] (the a -> infinity representation)."""
    ecfg = ecfg or EndSolverConfig()
    x, u, du, ddu = end.extended(ecfg.tail_x_far)
    s = end.sigma
    sel = (x >= x_lo) & (x <= x_hi)
    res = apply_T(s, x, u - s * x, du - s, ddu, cfg, ecfg, x_eval=x[sel], check_membership=False)
    return float(np.max(np.abs(s * x[sel] + res.value - u[sel]))), res


def convexity_identity_residual(end: ConicalEnd, cfg: DomainConfig, ecfg=None):
    """max |u''/(1+u'^2) - alpha (1/u - I)| on the grid."""
    ecfg = ecfg or EndSolverConfig()
    x, u, du, ddu = end.extended(ecfg.tail_x_far)
    s = end.sigma
    sp = hermite_spline(x, u - s * x, du - s, ddu)
    kern = ExpKernel(sp, s, ecfg.quad_tail_eps)
    nodes = end.x
    I = kern.inner(nodes, lambda z: 1.0 / (s * z + sp(z)))
    lhs = end.ddu / (1.0 + end.du ** 2)
    return float(np.max(np.abs(lhs - cfg.alpha * (1.0 / end.u - I))))


def apply_S(sigma, r, f, df, ddf, cfg: DomainConfig, ecfg: Optional[EndSolverConfig] = None,
            r_eval=None) -> OperatorResult:
    """S_sigma f(r) = r/sigma - alpha r int_r^inf t^-2 int_t^inf f'(s) p(s) e^{-(Q(s)-Q(t))} ds dt
    for an r-graph x = f(r) given on knots r (values, f', f'')."""
    _check_sigma(sigma)
    ecfg = ecfg or EndSolverConfig()
    alpha = cfg.alpha
    r = np.asarray(r, dtype=float)
    m = 1.0 / sigma
    sp = hermite_spline(r, np.asarray(f) - m * r, np.asarray(df) - m, ddf)
    kern = ExpKernel(sp, m, ecfg.quad_tail_eps)
    dsp = sp.derivative()
    h = lambda s: 2.0 * (m + dsp(s)) / s
    re = r if r_eval is None else np.asarray(r_eval, dtype=float)
    I, K, xt = _outer_with_tail(kern, r, h, re)
    Sf = m * re - alpha * re * K
    dSf = m - alpha * K + alpha * I / re
    return OperatorResult(re, Sf, dSf, None, I, K, xt)


def r_graph_extended(end: ConicalEnd, r_far=1000.0, dlog=0.01):
    """(r, f, f', f'') of an end continued beyond r(x_max) by x = r/sigma + d1/r + d3/r^3."""
    r, f, df, ddf = end.r_graph()
    R = float(r[-1])
    m = 1.0 / end.sigma
    v = float(f[-1]) - m * R
    dv = float(df[-1]) - m
    d3 = -0.5 * R * R * (v * R + dv * R * R)
    d1 = v * R - d3 / (R * R)
    n = max(2, int(math.ceil(math.log(r_far / R) / dlog)))
    rt = np.geomspace(R, r_far, n + 1)[1:]
    return (np.concatenate([r, rt]), np.concatenate([f, m * rt + d1 / rt + d3 / rt ** 3]),
            np.concatenate([df, m - d1 / rt ** 2 - 3 * d3 / rt ** 4]),
            np.concatenate([ddf, 2 * d1 / rt ** 3 + 12 * d3 / rt ** 5]))


def r_graph_residual(end: ConicalEnd, r_lo, r_hi, cfg: DomainConfig, ecfg=None):
    """C^0 fixed-point residual of S_sigma for the inverse graph of an end on [r_lo, r_hi]."""
    ecfg = ecfg or EndSolverConfig()
    r, f, df, ddf = r_graph_extended(end, ecfg.tail_x_far)
    sel = (r >= r_lo) & (r <= r_hi)
    res = apply_S(end.sigma, r, f, df, ddf, cfg, ecfg, r_eval=r[sel])
    return float(np.max(np.abs(res.value - f[sel]))), res


# ---------------------------------------------------------------------------
# blow-up of graphs leaving the cone tangentially

@dataclass
class BlowupResult:
    sigma: float
    x0: float
    x_inf: float
    angle_bound: float
    sharp_bound: Optional[float]
    tangent_bound_ok: bool
    psi_ok: bool
    curve: ProfileCurve

    @property
    def bounds_ok(self):
        ok = self.x_inf < self.angle_bound
        if self.sharp_bound is not None:
            ok = ok and self.x_inf <= self.sharp_bound
        return ok


def blowup_experiment(sigma, x0, cfg: DomainConfig, max_length=200.0) -> BlowupResult:
    """Follow the graph with u(x0) = sigma x0, u'(x0) = sigma forward to its vertical point."""
    _check_sigma(sigma)
    if not x0 > 0:
        raise ConfigError("x0 must be positive")
    a = cfg.alpha
    th0 = math.atan(sigma)
    win = Window(-1e3, 1e3, 1e3)
    c = integrate_geodesic((x0, sigma * x0, th0), max_length, win, cfg,
                           stop=lambda x, r, t: math.cos(t), events=False)
    if c.termination != "stop_condition":
        raise NoConvergence(f"no vertical point within arclength {max_length}")
    x_inf = float(c.x[-1])
    bound = (sigma * x0 / a) * (0.5 * math.pi - th0) + x0 if a else math.inf
    sharp = (1.0 + 1.0 / a) * x0 if a and sigma * x0 >= math.sqrt(2 * a) else None
    xs, ths = c.x[:-1], c.theta[:-1]
    arg = a * (xs - x0) / (sigma * x0) + th0
    m = arg < 0.5 * math.pi
    du = np.tan(ths)
    tan_ok = bool(np.all(du[m] >= np.tan(arg[m]) * (1 - 1e-9) - 1e-12))
    # Psi = x u' - u and Psi' = x u'' with u'' = Phi (1 + u'^2)
    psi = c.Psi[:-1]
    dpsi = xs * c.Phi[:-1] * (1 + du * du)
    tol = 1e-9 * (1 + np.abs(psi))
    psi_ok = bool(np.all(psi >= -tol) and np.all(dpsi[1:] > 0.5 * psi[1:] - tol[1:]))
    return BlowupResult(sigma, x0, x_inf, bound, sharp, tan_ok, psi_ok, c)


# ---------------------------------------------------------------------------
# properties of a computed end

@dataclass
class PropertyReport:
    sigma: float
    cone_domination: bool
    cone_margin: float
    u0_below_cylinder: bool
    u0_margin: float
    decay_exponent: float
    decay_slope_exponent: float
    decay_ok: bool
    envelope_ok: bool
    mean_convex: bool
    psi_max: float
    convex_monotone: bool
    convexity_identity: float
    flags: list

    @property
    def all_ok(self):
        return (self.cone_domination and self.u0_below_cylinder and self.decay_ok
                and self.mean_convex and self.convex_monotone)


def _loglog_slope(x, y):
    A = np.column_stack([np.log(x), np.ones_like(x)])
    return float(np.linalg.lstsq(A, np.log(y), rcond=None)[0][0])


def verify_end_properties(end: ConicalEnd, cfg: DomainConfig, ecfg=None,
                          fit_window=(12.5, None)) -> PropertyReport:
    ecfg = ecfg or EndSolverConfig()
    x, u, du, ddu, s, a = end.x, end.u, end.du, end.ddu, end.sigma, end.alpha
    flags = []
    rc = math.sqrt(2 * a)
    if end.flags.get("degenerate") == "cylinder":
        flags.append("cylinder: equality case u(0) = sqrt(2 alpha)")
        return PropertyReport(s, False, 0.0, False, float(rc - u[0]), math.nan, math.nan, False,
                              False, False, 0.0, False, math.nan, flags)
    cone = u - s * x
    lo, hi = fit_window[0], fit_window[1] or x[-1]
    w = (x >= lo) & (x <= hi)
    e1 = _loglog_slope(x[w], cone[w])
    e2 = _loglog_slope(x[w], s - du[w])
    decay_ok = -1.2 <= e1 <= -0.8 and -2.2 <= e2 <= -1.8
    m = x >= 1
    env = bool(np.all(np.abs(cone[m]) <= 2 * a / (s * x[m]))
               and np.all(np.abs(du[m] - s) <= 2 * a / (s * x[m] ** 2)))
    psi = x * du - u
    H = -psi / (2 * np.sqrt(1 + du * du))
    mean_convex = bool(np.all(psi < 0) and np.all(H > 0))
    inner = slice(1, -1)
    cm = bool(np.all(ddu[inner] > 0) and np.all(du[inner] > 0) and np.all(du[inner] < s))
    conv = convexity_identity_residual(end, cfg, ecfg)
    return PropertyReport(s, bool(np.all(cone > 0)), float(np.min(cone)), bool(u[0] < rc),
                          float(rc - u[0]), e1, e2, decay_ok, env, mean_convex,
                          float(np.max(psi)), cm, conv, flags)
