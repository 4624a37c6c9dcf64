import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkers.errors import ConfigError, DomainError
from shrinkers.geodesic import (DomainConfig, GeodesicState, ProfileCurve, Window,
                                derived_scalars, geodesic_rhs, graph_view, integrate_geodesic,
                                rgraph_rhs, ssode_rhs)

FAST = settings(max_examples=25, deadline=None)


def test_config_validation():
    with pytest.raises(ConfigError):
        DomainConfig(alpha=-1.0)
    with pytest.raises(ConfigError):
        DomainConfig(min_step=0.1, max_step=0.05)
    with pytest.raises(ConfigError):
        DomainConfig.for_dimension(0.5)
    cfg = DomainConfig.for_dimension(3)
    assert cfg.alpha == 2.0
    assert cfg.cylinder_radius() == 2.0
    assert cfg.sphere_radius() == pytest.approx(math.sqrt(6))


def test_rhs_domain_errors():
    cfg = DomainConfig()
    with pytest.raises(DomainError):
        geodesic_rhs(GeodesicState(0, 1.0, 0.0, 0.0), cfg)
    with pytest.raises(DomainError):
        ssode_rhs(1.0, -1.0, 0.0, cfg)
    with pytest.raises(DomainError):
        rgraph_rhs(0.0, 1.0, 0.0, cfg)


def test_rhs_on_exact_solutions():
    cfg = DomainConfig()
    # cylinder: horizontal tangent stays horizontal
    d = geodesic_rhs(GeodesicState(0, 3.0, math.sqrt(2), 0.0), cfg)
    assert d[2] == 0.0
    # sphere of radius 2: curvature 1/2 along the circle
    th = 0.3
    x, r = 2 * math.sin(th), 2 * math.cos(th)
    d = geodesic_rhs(GeodesicState(0, x, r, -th), cfg)
    assert d[2] == pytest.approx(-0.5, abs=1e-14)


@FAST
@given(st.floats(0.05, 10.0), st.floats(-5.0, 5.0))
def test_cylinder_is_exact(alpha, x0):
    cfg = DomainConfig(alpha=alpha)
    rc = math.sqrt(2 * alpha)
    c = integrate_geodesic((x0, rc, 0.0), 8.0, Window(), cfg)
    assert np.max(np.abs(c.r - rc)) == 0.0
    assert c.flags["degenerate_line"] == "cylinder"


@FAST
@given(st.floats(-1.5, 1.5), st.floats(0.5, 3.0), st.floats(-3.0, 3.0))
def test_reflection_symmetry(x0, r0, th0):
    cfg = DomainConfig()
    a = integrate_geodesic((x0, r0, th0), 3.0, Window(), cfg, events=False)
    b = integrate_geodesic((-x0, r0, math.pi - th0), 3.0, Window(), cfg, events=False)
    s = min(a.s[-1], b.s[-1])
    if a.termination == "hit_axis" or b.termination == "hit_axis":
        s = min(s, 0.9 * s)
    pa, pb = a.state_at(s), b.state_at(s)
    assert pa.x == pytest.approx(-pb.x, abs=1e-7)
    assert pa.r == pytest.approx(pb.r, abs=1e-7)


@FAST
@given(st.floats(-1.0, 1.0), st.floats(0.8, 2.5), st.floats(-1.0, 1.0))
def test_reversal(x0, r0, th0):
    cfg = DomainConfig()
    a = integrate_geodesic((x0, r0, th0), 2.0, Window(), cfg, events=False)
    if a.termination != "reached_max_length" or np.min(a.r) < 0.3:
        return
    b = integrate_geodesic((a.x[-1], a.r[-1], a.theta[-1] + math.pi), 2.0, Window(), cfg,
                           events=False)
    assert b.x[-1] == pytest.approx(x0, abs=1e-7)
    assert b.r[-1] == pytest.approx(r0, abs=1e-7)


@pytest.mark.parametrize("n", [2, 3, 7])
def test_sphere_events(n):
    cfg = DomainConfig.for_dimension(n)
    R = math.sqrt(2 * n)
    c = integrate_geodesic((0.0, R, 0.0), 2 * math.pi * R, Window(), cfg, through_axis=True)
    kinds = [e.kind for e in c.events]
    assert kinds.count("axis_hit") == 2
    assert kinds.count("vertical") == 2
    assert np.max(np.abs(c.x ** 2 + c.r ** 2 - R * R)) < 1e-8
    for e in c.event_kinds("horizontal"):
        assert abs(e.x) < 1e-9 and abs(abs(e.r) - R) < 1e-8
    for e in c.event_kinds("cylinder_crossing"):
        assert abs(abs(e.r) - math.sqrt(2 * (n - 1))) < 1e-9


def test_r_axis_line():
    cfg = DomainConfig()
    c = integrate_geodesic((0.0, 0.5, 0.5 * math.pi), 10.0, Window(), cfg)
    assert c.flags["degenerate_line"] == "r_axis"
    assert np.max(np.abs(c.x)) < 1e-15


def test_axis_start_curvature():
    # leaving the axis at x_b the curvature is Lambda/(2 alpha + 2) = x_b/(2n)
    cfg = DomainConfig()
    c = integrate_geodesic((1.0, 0.0, 0.5 * math.pi), 1.0, Window(), cfg)
    assert c.r[0] == 0.0
    assert c.kappa[0] == pytest.approx(0.25)
    with pytest.raises(DomainError):
        integrate_geodesic((1.0, 0.0, 0.3), 1.0, Window(), cfg)
    with pytest.raises(DomainError):
        integrate_geodesic((1.0, -1.0, 0.3), 1.0, Window(), cfg)


def test_alpha_zero_lines():
    cfg = DomainConfig(alpha=0.0)
    # without the rotational term, rays through the origin are geodesics
    c = integrate_geodesic((1.0, math.tan(0.3), 0.3), 5.0, Window(), cfg)
    assert np.max(np.abs(c.theta - 0.3)) < 1e-12
    assert np.max(np.abs(c.x * math.sin(0.3) - c.r * math.cos(0.3))) < 1e-10


def test_derived_scalars():
    cfg = DomainConfig()
    c = integrate_geodesic((0.3, 1.1, 0.4), 5.0, Window(), cfg)
    assert np.allclose(c.H, -0.5 * c.Lambda)
    lam = c.x * np.sin(c.theta) - c.r * np.cos(c.theta)
    assert np.allclose(c.Lambda, lam)
    g = np.abs(np.cos(c.theta)) > 1e-3
    assert np.allclose(c.Psi[g], lam[g] / np.cos(c.theta[g]))
    # kappa matches the slope of theta along the curve
    mid = 0.5 * (c.s[1:] + c.s[:-1])
    dth = np.diff(c.theta) / np.diff(c.s)
    assert np.max(np.abs(dth - np.interp(mid, c.s, c.kappa))) < 1e-3
    d = derived_scalars([2.0], [0.0], [0.5 * math.pi], 1.0)
    assert d["kappa"][0] == pytest.approx(0.5)


def test_terminations_and_stop():
    cfg = DomainConfig()
    c = integrate_geodesic((0.0, 1.0, 0.2), 100.0, Window(-3, 3, 3), cfg)
    assert c.termination == "left_domain_window"
    c = integrate_geodesic((0.0, 3.0, 0.0), 10.0, Window(), cfg,
                           stop=lambda x, r, t: math.cos(t))
    assert c.termination == "stop_condition"
    assert abs(math.cos(c.theta[-1])) < 1e-12
    with pytest.raises(ConfigError):
        integrate_geodesic((0.0, 1.0, 0.0), 0.0, Window(), cfg)


def test_profile_curve_validation_and_dense():
    cfg = DomainConfig()
    with pytest.raises(ValueError):
        ProfileCurve([0, 0], [0, 1], [1, 1], [0, 0], cfg)
    c = integrate_geodesic((0.0, 2.0, 0.0), 3.0, Window(), cfg)
    with pytest.raises(ValueError):
        c.state_at(5.0)
    st = c.state_at(1.234)
    assert st.x ** 2 + st.r ** 2 == pytest.approx(4.0, abs=1e-9)
    t = c.truncated(2.0)
    assert t.s[-1] == pytest.approx(2.0)


def test_graph_view_sphere():
    cfg = DomainConfig()
    c = integrate_geodesic((-1.0, math.sqrt(3), math.pi / 6), 2 * math.pi * 2, Window(), cfg,
                           through_axis=True)
    arcs = graph_view(c)
    maximal = [a for a in arcs if a.maximal]
    assert maximal
    for a in maximal:
        assert a.contains_raxis and a.horizontal_points >= 1


def _gdot(c):
    return c.x * np.cos(c.theta) + c.r * np.sin(c.theta)


@FAST
@given(st.floats(-2.0, 2.0), st.floats(0.4, 3.0), st.floats(-3.0, 3.0))
def test_rhs_consistency(x0, r0, th0):
    cfg = DomainConfig()
    c = integrate_geodesic((x0, r0, th0), 6.0, Window(), cfg, events=False)
    m = np.abs(c.r) > 1e-3
    expect = 0.5 * c.Lambda[m] + cfg.alpha * np.cos(c.theta[m]) / c.r[m]
    assert np.max(np.abs(c.kappa[m] - expect)) < 10 * cfg.abs_tol
    # and the stored theta really moves at that rate (central differences on dense output)
    h = 1e-5
    for s in np.linspace(c.s[0] + 0.01, c.s[-1] - 0.01, 5):
        st0 = c.state_at(s)
        if abs(st0.r) < 0.05:
            continue
        d = (c.state_at(s + h).theta - c.state_at(s - h).theta) / (2 * h)
        k = derived_scalars([st0.x], [st0.r], [st0.theta], cfg.alpha)["kappa"][0]
        assert d == pytest.approx(k, rel=1e-6, abs=1e-6)


@FAST
@given(st.floats(-2.0, 2.0), st.floats(0.5, 3.0), st.floats(-3.0, 3.0))
def test_lambda_dynamics(x0, r0, th0):
    cfg = DomainConfig()
    c = integrate_geodesic((x0, r0, th0), 4.0, Window(), cfg, events=False)
    h = 1e-4
    for s in np.linspace(c.s[0] + 0.01, c.s[-1] - 0.01, 9):
        a, b, m = c.state_at(s - h), c.state_at(s + h), c.state_at(s)
        if min(abs(a.r), abs(b.r)) < 0.1:
            continue
        lam = lambda q: q.x * math.sin(q.theta) - q.r * math.cos(q.theta)  # noqa: E731
        dlam = (lam(b) - lam(a)) / (2 * h)
        gd = m.x * math.cos(m.theta) + m.r * math.sin(m.theta)
        rhs = 0.5 * lam(m) * gd + cfg.alpha / m.r * math.cos(m.theta) * gd
        assert dlam == pytest.approx(rhs, rel=1e-6, abs=1e-6)


@FAST
@given(st.floats(0.5, 3.0), st.floats(0.3, 2.0), st.floats(0.05, 1.5))
def test_lambda_growth_bound(x0, r0, th0):
    # with cos theta > 0 (the orientation of the estimate), Lambda > 0 and <gamma, gamma'> > 0
    # force Lambda(t) >= exp((|gamma(t)|^2 - |gamma(t0)|^2)/4) Lambda(t0)
    cfg = DomainConfig()
    lam0 = x0 * math.sin(th0) - r0 * math.cos(th0)
    if lam0 <= 0 or x0 * math.cos(th0) + r0 * math.sin(th0) <= 0:
        return
    c = integrate_geodesic((x0, r0, th0), 5.0, Window(), cfg, events=False)
    ok = (_gdot(c) > 0) & (np.cos(c.theta) > 0)
    k = len(ok) if ok.all() else int(np.argmin(ok))
    q = c.x[:k] ** 2 + c.r[:k] ** 2
    bound = np.exp((q - q[0]) / 4) * lam0 * (1 - 1e-6)
    assert np.all(c.Lambda[:k] >= bound)


@pytest.mark.parametrize("init", [(1.0, 1.0, -1.2), (1.0, 2.5, 1.0), (-2.0, 0.8, -0.5)])
def test_theta_ddot_sign_at_inflections(init):
    cfg = DomainConfig()
    c = integrate_geodesic(init, 20.0, Window(), cfg, events=False)
    k = np.nonzero(np.sign(c.kappa[1:]) != np.sign(c.kappa[:-1]))[0]
    from scipy.optimize import brentq

    def kap(s):
        q = c.state_at(s)
        return derived_scalars([q.x], [q.r], [q.theta], cfg.alpha)["kappa"][0]

    checked = 0
    for i in k:
        if min(abs(c.r[i]), abs(c.r[i + 1])) < 0.05:
            continue
        s0 = brentq(kap, c.s[i], c.s[i + 1], xtol=1e-13)
        q = c.state_at(s0)
        h = 1e-4
        dd = (kap(min(s0 + h, c.s[-1])) - kap(max(s0 - h, c.s[0]))) / (2 * h)
        expect = -cfg.alpha / q.r ** 2 * math.sin(q.theta) * math.cos(q.theta)
        assert np.sign(dd) == np.sign(expect)
        assert dd == pytest.approx(expect, abs=1e-5)
        checked += 1
    assert checked >= 1


@pytest.mark.parametrize("xb", [-1.5, 0.0, 0.7, 2.0])
def test_axis_orthogonality(xb):
    # leave the axis, turn around, and come back: the return must meet the axis at right angles
    cfg = DomainConfig()
    out = integrate_geodesic((xb, 0.0, 0.5 * math.pi), 1.0, Window(), cfg)
    back = integrate_geodesic((out.x[-1], out.r[-1], out.theta[-1] + math.pi), 5.0, Window(),
                              cfg)
    assert back.termination == "hit_axis"
    assert abs(math.cos(back.theta[-1])) < 1e-6
    assert back.x[-1] == pytest.approx(xb, abs=1e-6)
