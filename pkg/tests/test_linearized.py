import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkers.ends import EndSolverConfig, solve_end
from shrinkers.errors import ConfigError, DomainError
from shrinkers.linearized import (identity_residual, limit_check, linearized_identity_residual,
                                  refined_identity_residual, series_coefficients, series_eval,
                                  sigma_limit_check, solve_linearized, trap_check,
                                  trap_violations)

HERE = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(HERE, "oracle_values.json")) as fh:
    ORACLE = json.load(fh)


def test_series_recursion():
    a = 1.5
    c = series_coefficients(a, 6)
    g, dg, ddg = series_eval(a, np.array([30.0, 40.0]), 6)
    r = np.array([30.0, 40.0])
    # the truncated series solves the equation up to its first omitted term
    res = ddg - ((0.5 * r - a / r) * dg - 0.5 * g)
    assert np.max(np.abs(res)) < 1e-12
    assert c[0] == (1, 1.0) and c[1] == (-1, -a)


def test_alpha_must_be_positive():
    with pytest.raises(DomainError):
        solve_linearized(0.0)


def test_defect_and_identity(linearized):
    assert linearized.defect(0.01) < 1e-8
    assert linearized_identity_residual(linearized) < 1e-6


def test_refined_identity_agrees(linearized):
    assert refined_identity_residual(linearized) < 1e-6


def test_line_is_not_a_solution(linearized):
    r = linearized.r
    res, _, _ = identity_residual(1.0, np.concatenate([r, np.geomspace(41, 1000, 200)]),
                                  np.concatenate([r, np.geomspace(41, 1000, 200)]),
                                  np.ones(len(r) + 200), np.zeros(len(r) + 200), (0.1, 5.0))
    assert res > 0.05


@pytest.mark.parametrize("lam", [0.5, 3.0, -2.0])
def test_linear_scaling(linearized, lam):
    scaled = solve_linearized(1.0, slope=lam)
    assert np.max(np.abs(scaled.g - lam * linearized.g)) < 1e-9 * abs(lam) * np.max(
        np.abs(linearized.g))
    base = linearized_identity_residual(linearized)
    assert linearized_identity_residual(linearized.scaled(lam)) == pytest.approx(
        abs(lam) * base, rel=1e-6, abs=1e-13)


def test_single_sign_change(linearized):
    assert linearized.sign_changes() == 1
    assert linearized.g[0] < 0 < linearized.g[-1]


def test_zero_matches_oracle(linearized):
    assert linearized.zero() == pytest.approx(ORACLE["linearized_zero_alpha1"], abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.01, 3.0), st.floats(-3.0, 0.0))
def test_positive_decreasing_trap(r0, g0, dg0):
    holds, r_stop = trap_check(1.0, r0, g0, dg0, r_end=12.0)
    assert holds


def test_trap_rejects_bad_start():
    with pytest.raises(ConfigError):
        trap_check(1.0, 1.0, -1.0, 0.0)


def test_solution_never_trapped(linearized):
    g = linearized
    assert trap_violations(g.r, g.g, g.dg) == []
    assert np.all(g.dg > 0)


def test_limit_statement(linearized):
    # stated: g(r) -> -alpha int_0^inf g' e^{-s^2/4} ds as r -> 0 to 1e-5
    rep = limit_check(linearized)
    assert rep.limit_ok, f"mismatch {rep.mismatch.tolist()}"


def test_pointwise_relation(linearized):
    # the differentiated identity holds exactly; the mismatch of the limit statement is r g'
    rep = limit_check(linearized)
    assert np.max(np.abs(rep.pointwise)) < 1e-6
    gap = np.abs(rep.mismatch - rep.r_dg)
    assert np.all(np.diff(gap) < 0) and gap[-1] < 1e-5
    assert rep.r_dg[-1] == pytest.approx(2 / math.sqrt(math.pi), abs=1e-3)


def test_probe_below_grid(linearized):
    with pytest.raises(ConfigError):
        limit_check(linearized, radii=(1e-5,))


@pytest.fixture(scope="module")
def sigma_limit(cfg2, ecfg, linearized, ends):
    return sigma_limit_check(cfg2, ecfg, sol=linearized,
                             ends={1 / s: ends(s) for s in (4.0, 8.0, 16.0)})


def test_sigma_limit_errors_decrease(sigma_limit):
    e = sigma_limit.errors
    assert e[0] > e[1] > e[2]


def test_sigma_limit_first_order(sigma_limit):
    # stated: empirical order about 1 in sigma_hat
    assert all(abs(o - 1.0) < 0.25 for o in sigma_limit.orders), sigma_limit.orders


def test_sigma_limit_envelope_and_sign(sigma_limit):
    assert sigma_limit.envelope_ok and sigma_limit.envelope_margin > 0
    assert sigma_limit.sign_portrait_ok
    assert sigma_limit.sign_f < 0 and sigma_limit.sign_g < 0


def test_sigma_limit_window_not_graphical(cfg2, linearized):
    short = EndSolverConfig(x_max=5.0)
    with pytest.raises(ConfigError):
        sigma_limit_check(cfg2, short, sigma_hats=(1.0,), sol=linearized,
                          ends={1.0: solve_end(1.0, cfg2, short)})
