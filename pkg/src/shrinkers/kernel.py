"""Exponentially weighted double integrals along a graph.

For a profile phi(z) = m*z + d(z) put p = 1 + phi'^2 and Q' = (z/2) p.  The
operators of the conical-end and linearized problems are built from

    I(t) = int_t^S Q'(s) h(s) exp(-(Q(s) - Q(t))) ds        (S = infinity or finite)

and the outer integral int_x t^-2 I(t) dt.  Q grows quadratically, so it is split as
p_inf (s^2 - t^2)/4 + R(s) - R(t) with p_inf = 1 + m^2; R stays O(log s) and the
difference Q(s) - Q(t) is formed without cancellation between large numbers.

The inner integral is done by Gauss-Legendre panels in s whose edges are the points
where Q(s) - Q(t) crosses fixed levels w_k; the infinite integral is truncated at
w = -log(tail_eps).
"""
import math

import numpy as np
from scipy.interpolate import BPoly, PPoly

from .errors import GridTooShort

_GL8 = np.polynomial.legendre.leggauss(8)
_GL12 = np.polynomial.legendre.leggauss(12)


def hermite_spline(x, y, dy, ddy) -> PPoly:
    """C^2 piecewise quintic matching values and first two derivatives at the knots."""
    x = np.asarray(x, dtype=float)
    data = np.column_stack([y, dy, ddy])
    return PPoly.from_bernstein_basis(BPoly.from_derivatives(x, data))


def _poly_mul(a, b):
    """Product of piecewise polynomials given as PPoly coefficient arrays (highest first)."""
    ka, kb = a.shape[0], b.shape[0]
    out = np.zeros((ka + kb - 1, a.shape[1]))
    for i in range(ka):
        out[i:i + kb] += a[i] * b
    return out


def _w_edges(W):
    e = [0.0, 0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0,
         12.0, 15.0, 18.0, 22.0, 26.0]
    e = [v for v in e if v < W]
    return np.array(e + [W])


class ExpKernel:
    """Kernel exp(-(Q(s) - Q(t))) Q'(s) ds for the profile m*z + d(z) on [x[0], x[-1]].

    ``dev`` is a PPoly for d (or None for d = 0).
    """

    def __init__(self, dev, slope, tail_eps=1e-14, x_end=math.inf):
        self.m = float(slope)
        self.p_inf = 1.0 + self.m * self.m
        self.tail_eps = tail_eps
        self.W = -math.log(tail_eps)
        self.dev = dev
        if dev is None:
            self.x0, self.x1 = 0.0, float(x_end)
            self._dd = None
            self._R = None
            return
        self.x0, self.x1 = float(dev.x[0]), float(dev.x[-1])
        dd = dev.derivative()
        self._dd = dd
        # (z/2)(p - p_inf) = (z/2) d'(2m + d'), z = t + x_j on each piece
        c = dd.c
        twom = c.copy()
        twom[-1] = twom[-1] + 2.0 * self.m
        prod = _poly_mul(c, twom)
        zj = dd.x[:-1]
        lin = np.vstack([0.5 * np.ones_like(zj), 0.5 * zj])
        rc = _poly_mul(prod, lin)
        self._R = PPoly(rc, dd.x).antiderivative()

    # -- profile quantities
    def dphi(self, z):
        if self._dd is None:
            return np.full_like(np.asarray(z, dtype=float), self.m)
        return self.m + self._dd(z)

    def p(self, z):
        if self._dd is None:
            return np.full_like(np.asarray(z, dtype=float), self.p_inf)
        g = self._dd(z)
        return self.p_inf + g * (2.0 * self.m + g)

    def qprime(self, z):
        return 0.5 * np.asarray(z) * self.p(z)

    def R(self, z):
        if self._R is None:
            return np.zeros_like(np.asarray(z, dtype=float))
        return self._R(z)

    def dq(self, t, s):
        """Q(s) - Q(t)."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return 0.25 * self.p_inf * (s - t) * (s + t) + (self.R(s) - self.R(t))

    def s_at(self, t, w, iters=60):
        """Solve Q(s) - Q(t) = w for s >= t (vectorized, broadcasting t against w)."""
        t, w = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(w, dtype=float))
        pt = self.p(t)
        s = np.sqrt(t * t + 4.0 * w / pt)
        s = np.minimum(s, self.x1)
        for _ in range(iters):
            f = self.dq(t, s) - w
            ds = f / np.maximum(self.qprime(s), 1e-300)
            s_new = np.clip(s - ds, t, self.x1)
            done = np.abs(s_new - s) <= 1e-15 * np.maximum(1.0, s)
            s = s_new
            if done.all():
                break
        return s

    def check_extent(self, t):
        """Raise GridTooShort unless the truncation level is reachable from every t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not math.isfinite(self.x1):
            return
        reach = self.dq(t, np.full_like(t, self.x1))
        if np.any(reach < self.W):
            bad = float(t[np.argmin(reach)])
            raise GridTooShort(f"grid ends at {self.x1:g}, too short for tail_eps="
                               f"{self.tail_eps:g} from t={bad:g}")

    def inner(self, t, h, upper=None):
        """int_t^upper Q'(s) h(s) exp(-(Q(s)-Q(t))) ds for an array of t.

        upper=None means infinity (truncated where the weight drops below tail_eps);
        otherwise a scalar finite upper limit >= t.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if upper is None:
            self.check_extent(t)
            Wt = np.full_like(t, self.W)
        else:
            Wt = np.maximum(self.dq(t, np.full_like(t, float(upper))), 0.0)
        edges = _w_edges(self.W)
        # w-levels per t, capped at that t's total
        lev = np.minimum(edges[None, :], Wt[:, None])
        se = self.s_at(t[:, None], lev)
        if upper is not None:
            se[:, -1] = np.where(Wt > 0, float(upper), t)
            se = np.minimum(se, float(upper))
        xg, wg = _GL12
        a = se[:, :-1, None]
        b = se[:, 1:, None]
        half = 0.5 * (b - a)
        s = a + half * (xg + 1.0)
        tt = np.broadcast_to(t[:, None, None], s.shape)
        f = self.qprime(s) * h(s) * np.exp(-self.dq(tt, s))
        return np.sum(f * wg * half, axis=(1, 2))

    def normalization(self, t, upper=None):
        """int_t Q' exp(-(Q-Q(t))) ds computed by quadrature (exactly 1 - e^-W without truncation)."""
        return self.inner(t, np.ones_like, upper)


def gl_cumulative_right(x, f, order=8):
    """J[j] = int_{x_j}^{x_-1} f(t) dt for increasing knots x, by Gauss-Legendre per interval.

    f takes an array of abscissae.
    """
    xg, wg = _GL8 if order == 8 else np.polynomial.legendre.leggauss(order)
    a = x[:-1, None]
    half = 0.5 * (x[1:] - x[:-1])[:, None]
    t = a + half * (xg + 1.0)
    vals = f(t.ravel()).reshape(t.shape)
    piece = np.sum(vals * wg * half, axis=1)
    out = np.zeros_like(x)
    out[:-1] = np.cumsum(piece[::-1])[::-1]
    return out


def backward_flow_defect(x, y, dy, second, rate, substeps=None):
    """Max mismatch after integrating y'' = second(x, y, y') across each grid interval,
    right to left, from the stored right-node values (classical RK4, vectorized).

    rate(x, y, y') bounds the stiff decay rate so the substeps stay well inside the
    RK4 stability region.
    """
    x = np.asarray(x, dtype=float)
    Y = np.vstack([y[1:], dy[1:]])
    xr = x[1:].copy()
    if substeps is None:
        lam = rate(x[1:], y[1:], dy[1:]) + 1.0
        substeps = max(8, int(math.ceil(np.max(lam * (x[1:] - x[:-1])) / 0.1)))
    h = (x[:-1] - x[1:]) / substeps

    def f(xx, yy):
        return np.vstack([yy[1], second(xx, yy[0], yy[1])])

    for _ in range(substeps):
        k1 = f(xr, Y)
        k2 = f(xr + 0.5 * h, Y + 0.5 * h * k1)
        k3 = f(xr + 0.5 * h, Y + 0.5 * h * k2)
        k4 = f(xr + h, Y + h * k3)
        Y = Y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        xr = xr + h
    return float(max(np.max(np.abs(Y[0] - y[:-1])), np.max(np.abs(Y[1] - dy[:-1]))))


def power_tail(X, I1, I2, X1, X2):
    """int_X^inf I(t)/t^2 dt for I(t) = A/t + B/t^3 fitted through (X1, I1), (X2, I2)."""
    # I t = A + B t^-2
    B = (I1 * X1 - I2 * X2) / (X1 ** -2 - X2 ** -2)
    A = I2 * X2 - B * X2 ** -2
    return A / (2.0 * X * X) + B / (4.0 * X ** 4)
