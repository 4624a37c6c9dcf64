import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkers.classifier import (VERDICTS, census, classify, find_torus, maximal_geodesic,
                                  reflect_close, scan_closed, self_intersection, shoot,
                                  shoot_closed, wound_trajectory)
from shrinkers.errors import ConfigError
from shrinkers.geodesic import DomainConfig, ProfileCurve, Window, integrate_geodesic

HERE = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(HERE, "oracle_values.json")) as fh:
    ORACLE = json.load(fh)


def sphere_circle(cfg, closed=True):
    R = math.sqrt(2 * (cfg.alpha + 1))
    c = integrate_geodesic((0.0, R, 0.0), 2 * math.pi * R, Window(), cfg, through_axis=True)
    if not closed:
        return c
    # drop the duplicated end point and mark the curve closed
    return ProfileCurve(c.s[:-1], c.x[:-1], c.r[:-1], c.theta[:-1], cfg,
                        termination=c.termination, closed=True)


def figure_eight(n=2001):
    t = np.linspace(0.0, 2 * math.pi, n)[:-1] + 0.1
    x = np.cos(t)
    r = 2.0 + 0.5 * np.sin(2 * t)
    dx, dr = -np.sin(t), np.cos(2 * t)
    seg = np.hypot(np.diff(x), np.diff(r))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return ProfileCurve(s, x, r, np.unwrap(np.arctan2(dr, dx)), DomainConfig(),
                        events=False, ode=False)


def test_sphere_census(cfg2):
    rep = census(sphere_circle(cfg2), cfg2)
    assert (rep.n_vertical, rep.n_horizontal, rep.raxis_crossings) == (2, 2, 2)
    assert rep.axis_hits == 2
    assert rep.higgins_ok and rep.arcs_ok


def test_trumpet_has_no_vertical_points(cfg2, ends):
    rep = census(ends(1.0).profile_curve(cfg2), cfg2)
    assert rep.n_vertical == 0
    assert rep.higgins_ok and rep.arcs_ok


def test_cylinder_census_skipped(cfg2):
    c = integrate_geodesic((-3.0, math.sqrt(2), 0.0), 6.0, Window(), cfg2)
    rep = census(c, cfg2)
    assert rep.degenerate == "cylinder" and rep.n_vertical == 0


def test_figure_eight_intersection():
    hit = self_intersection(figure_eight())
    assert hit is not None and hit.residual <= 1e-10
    assert hit.x == pytest.approx(0.0, abs=1e-6)
    assert hit.r == pytest.approx(2.0, abs=1e-6)
    assert len(self_intersection(figure_eight(), find_all=True)) == 1


def test_sphere_is_embedded(cfg2):
    assert self_intersection(sphere_circle(cfg2), cfg2) is None


def test_too_few_samples(cfg2):
    c = ProfileCurve([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], cfg2,
                     events=False, ode=False)
    with pytest.raises(ConfigError):
        self_intersection(c, cfg2)


def test_sphere_shot_closes(cfg2):
    sh = shoot(2.0, cfg2)
    assert sh.reason == "crossed_r_axis"
    assert abs(sh.residual) < 1e-9
    assert sh.curve.r[-1] < 0      # the crossing lies on the mirrored half
    with pytest.raises(ConfigError):
        shoot(0.0, cfg2)


def test_scan_brackets(cfg2):
    r0, shots, brackets = scan_closed(0.3, 0.6, 6, cfg2)
    assert len(r0) == 7 and len(shots) == 7
    assert any(a <= ORACLE["torus_alpha1"]["r_inner"] <= b for a, b in brackets)


def test_dense_scan_finds_nontrivial_closed_curve(cfg2):
    r0, shots, brackets = scan_closed(0.2, 2.0, 180, cfg2)
    assert np.allclose(np.diff(r0), 0.01)
    # at least one bracket away from the sphere radius 2
    assert any(b < 1.9 for _, b in brackets)


def test_near_cylinder_residuals_recorded(cfg2):
    # the sign pattern here is data, not a claim; only finiteness and smallness are checked
    rc = math.sqrt(2 * cfg2.alpha)
    res = [shoot_closed(rc * f, cfg2) for f in (1 - 1e-3, 1 + 1e-3)]
    assert all(math.isfinite(v) and abs(v) < 0.05 for v in res)


def test_torus_matches_oracle(torus):
    assert torus.r_inner == pytest.approx(ORACLE["torus_alpha1"]["r_inner"], abs=1e-8)
    assert torus.r_outer == pytest.approx(ORACLE["torus_alpha1"]["r_outer"], abs=1e-8)
    assert torus.assembly_gap < 1e-8 and torus.direct_gap < 1e-8
    assert torus.census.raxis_crossings == 2
    assert torus.self_intersection is None
    assert torus.min_r > 0
    assert torus.record()["source"].startswith("artifact-derived")


def test_torus_invalid_bracket(cfg2):
    with pytest.raises(ConfigError):
        find_torus((1.0, 1.1), cfg2)


def test_reflect_close_symmetric(torus, cfg2):
    c = torus.curve
    assert c.closed
    n = len(c.s)
    # the closed curve is symmetric under x -> -x
    mid = c.s[-1] / 2
    for s in np.linspace(0.1, mid - 0.1, 7):
        a, b = c.state_at(s), c.state_at(2 * mid - s)
        assert a.x == pytest.approx(-b.x, abs=1e-9) and a.r == pytest.approx(b.r, abs=1e-9)
    assert n > 10


@pytest.mark.parametrize("n", [2, 3])
def test_classify_exact_solutions(n):
    cfg = DomainConfig.for_dimension(n)
    rc = math.sqrt(2 * cfg.alpha)
    assert classify(integrate_geodesic((0.0, 0.5, 0.5 * math.pi), 5.0, Window(), cfg),
                    cfg).verdict == "r_axis"
    assert classify(integrate_geodesic((-2.0, rc, 0.0), 5.0, Window(), cfg),
                    cfg).verdict == "cylinder"
    assert classify(sphere_circle(cfg, closed=False), cfg).verdict == "sphere"


def test_classify_torus_and_trumpets(torus, cfg2, ends):
    assert classify(torus.curve, cfg2).verdict == "closed_two_crossings"
    for s in (0.5, 1.0):
        rep = classify(ends(s).profile_curve(cfg2), cfg2)
        assert rep.verdict == "conical_end"
        assert rep.sigma_estimate == pytest.approx(s, abs=1e-6)
        m = classify(maximal_geodesic(ends(s), cfg2), cfg2)
        assert m.verdict == "non_embedded"
        assert m.self_intersection.residual <= 1e-10
    assert set(VERDICTS) >= {"inconclusive", "non_embedded"}


def test_inconclusive_short_arc(cfg2):
    c = integrate_geodesic((0.5, 1.0, 0.2), 0.5, Window(), cfg2)
    assert classify(c, cfg2).verdict == "inconclusive"


@settings(max_examples=4, deadline=None)
@given(st.floats(0.3, 3.0))
def test_wound_trajectories_intersect(r0):
    cfg = DomainConfig()
    c = wound_trajectory(r0, cfg)
    if c is None:
        return
    assert census(c, cfg).n_vertical >= 7
    hit = self_intersection(c, cfg)
    assert hit is not None and hit.residual <= 1e-10


@settings(max_examples=6, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(0.3, 3.0), st.floats(-math.pi, math.pi))
def test_census_laws_on_random_geodesics(x0, r0, th0):
    cfg = DomainConfig()
    c = integrate_geodesic((x0, r0, th0), 25.0, Window(), cfg, through_axis=True)
    rep = census(c, cfg)
    assert rep.higgins_ok, rep.higgins_failures
    assert rep.arcs_ok, rep.arc_failures
