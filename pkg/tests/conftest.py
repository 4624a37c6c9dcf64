import math

import pytest

from shrinkers.ends import EndSolverConfig, solve_end
from shrinkers.geodesic import DomainConfig

TRUMPET_SIGMAS = (0.25, 0.5, 1.0, 2.0, 4.0)

# criterion number -> (passed, detail), filled by test_acceptance
CRITERIA = {}


@pytest.fixture(scope="session")
def cfg2():
    return DomainConfig.for_dimension(2)


@pytest.fixture(scope="session")
def ecfg():
    return EndSolverConfig()


@pytest.fixture(scope="session")
def ends(cfg2, ecfg):
    """Conical ends for n = 2, solved once per session."""
    cache = {}

    def get(sigma):
        if sigma not in cache:
            cache[sigma] = solve_end(sigma, cfg2, ecfg)
        return cache[sigma]
    return get


@pytest.fixture(scope="session")
def linearized(cfg2):
    from shrinkers.linearized import solve_linearized
    return solve_linearized(cfg2.alpha)


@pytest.fixture(scope="session")
def torus(cfg2):
    from shrinkers.classifier import find_torus
    return find_torus((0.43, 0.44), cfg2)


@pytest.fixture(scope="session")
def criteria():
    return CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def sphere_drift(c, alpha):
    return max(abs(x * x + r * r - 2 * (alpha + 1)) for x, r in zip(c.x, c.r))


def isclose(a, b, tol):
    return math.isfinite(a) and abs(a - b) <= tol
