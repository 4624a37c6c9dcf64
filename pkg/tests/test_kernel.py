import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfcx

from shrinkers.errors import GridTooShort
from shrinkers.kernel import (ExpKernel, backward_flow_defect, gl_cumulative_right,
                              hermite_spline, power_tail)

FAST = settings(max_examples=30, deadline=None)


def test_hermite_spline_reproduces_quintic():
    c = np.array([0.3, -1.0, 0.5, 2.0, -0.7, 0.1])
    p = np.polynomial.Polynomial(c)
    x = np.linspace(-1.0, 2.0, 5)
    sp = hermite_spline(x, p(x), p.deriv()(x), p.deriv(2)(x))
    t = np.linspace(-1.0, 2.0, 101)
    assert np.max(np.abs(sp(t) - p(t))) < 1e-12
    assert np.max(np.abs(sp(t, 2) - p.deriv(2)(t))) < 1e-10


@pytest.mark.parametrize("m", [0.0, 0.7, 2.0])
def test_flat_normalization(m):
    k = ExpKernel(None, m)
    t = np.linspace(0.0, 25.0, 51)
    assert np.max(np.abs(k.normalization(t) - 1.0)) < 1e-12


@pytest.mark.parametrize("m", [0.0, 1.5])
def test_linear_weight_closed_form(m):
    # int_t^inf Q' s e^{-(Q(s)-Q(t))} ds = t + sqrt(pi/p) erfcx(t sqrt(p)/2), Q = p s^2/4
    k = ExpKernel(None, m, tail_eps=1e-16)
    p = 1 + m * m
    t = np.linspace(0.05, 20.0, 40)
    exact = t + math.sqrt(math.pi / p) * erfcx(t * math.sqrt(p) / 2)
    assert np.max(np.abs(k.inner(t, lambda s: s) - exact) / exact) < 1e-12


def test_finite_upper_limit():
    k = ExpKernel(None, 0.0)
    t = np.array([0.5, 1.0, 2.0])
    got = k.normalization(t, upper=3.0)
    exact = 1.0 - np.exp(-(9.0 - t * t) / 4)
    assert np.max(np.abs(got - exact)) < 1e-13


def test_grid_too_short():
    k = ExpKernel(None, 0.0, x_end=15.0)
    with pytest.raises(GridTooShort):
        k.inner(np.array([1.0, 14.0]), np.ones_like)
    k.check_extent(np.array([0.0, 5.0]))


def test_deviation_profile_normalization():
    # d(z) = 0.3 exp(-z) on [0, 20]: the weight still integrates to 1
    x = np.linspace(0.0, 20.0, 401)
    d = 0.3 * np.exp(-x)
    k = ExpKernel(hermite_spline(x, d, -d, d), 1.0)
    t = np.linspace(0.0, 8.0, 17)
    assert np.max(np.abs(k.normalization(t) - 1.0)) < 1e-10
    # Q(s) - Q(t) matches direct quadrature of Q'
    from scipy.integrate import quad
    direct = quad(lambda z: float(k.qprime(z)), 1.0, 3.0, epsabs=1e-13, epsrel=1e-13)[0]
    assert float(k.dq(1.0, 3.0)) == pytest.approx(direct, rel=1e-12)


@FAST
@given(st.integers(0, 15))
def test_gl_cumulative_exact_on_polynomials(deg):
    x = np.linspace(0.0, 3.0, 9)
    cum = gl_cumulative_right(x, lambda t: t ** deg)
    exact = (3.0 ** (deg + 1) - x ** (deg + 1)) / (deg + 1)
    assert np.max(np.abs(cum - exact)) <= 1e-12 * max(1.0, exact[0])


@FAST
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1.0, 10.0))
def test_power_tail_exact(A, B, X):
    I = lambda t: A / t + B / t ** 3  # noqa: E731
    got = power_tail(X, I(X), I(2 * X), X, 2 * X)
    exact = A / (2 * X * X) + B / (4 * X ** 4)
    assert got == pytest.approx(exact, abs=1e-12)


def test_backward_flow_defect():
    # y'' = -y with exact samples has defect at RK4 truncation level
    x = np.linspace(0.0, 5.0, 51)
    second = lambda xx, y, dy: -y  # noqa: E731
    rate = lambda xx, y, dy: np.ones_like(xx)  # noqa: E731
    assert backward_flow_defect(x, np.sin(x), np.cos(x), second, rate) < 1e-10
    # a perturbed sample shows up
    y = np.sin(x)
    y[10] += 1e-6
    assert backward_flow_defect(x, y, np.cos(x), second, rate) > 5e-7
