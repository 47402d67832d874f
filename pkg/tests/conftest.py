import numpy as np
import pytest

from reentrant_flow import Constant, Custom, ReciprocalMass, Samples, Scenario, solve


def unit_speed(mass_cap=None):
    """lambda = 1 everywhere."""
    one = lambda x, W: np.ones(np.broadcast(np.asarray(x), np.asarray(W)).shape)
    zero = lambda x, W: np.zeros(np.broadcast(np.asarray(x), np.asarray(W)).shape)
    return Custom(one, zero, zero, mass_cap=mass_cap, x_independent=True)


def sin2_samples(lo, hi, n=4097):
    s = np.linspace(lo, hi, n)
    return Samples(np.sin(np.pi * s) ** 2, lo, hi, nonneg=True)


def steady_scenario(T=3.0):
    return Scenario(ReciprocalMass(), Constant(1.0, 0.0, 1.0), Constant(0.5, 0.0, T), T)


def transport_scenario(T=2.0):
    return Scenario(unit_speed(), sin2_samples(0.0, 1.0), sin2_samples(0.0, T), T)


def sin2_density(t, x):
    """Closed-form density of the unit-speed sin^2 transport scenario."""
    return np.sin(np.pi * (x - t)) ** 2


def sin2_mass(t):
    """W(t) for the unit-speed sin^2 transport scenario."""
    t = np.asarray(t, dtype=float)
    # mass inside equals the integral of sin^2 over the unit window [t - 1, t]
    return 0.5 + 0.0 * t


@pytest.fixture(scope="session")
def steady_solution():
    return solve(steady_scenario())


@pytest.fixture(scope="session")
def transport_solution():
    return solve(transport_scenario())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.line(lines[n])
