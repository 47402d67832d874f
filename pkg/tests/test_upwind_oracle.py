import numpy as np
import pytest

from conftest import unit_speed
from reentrant_flow import Constant, PiecewiseLinear, ReciprocalMass, Samples, Scenario, solve
from reentrant_flow.errors import CFLViolation
from reentrant_flow.invariants import oracle_distance
from reentrant_flow.upwind_oracle import UpwindState, l1_distance_to, run, step


def test_zero_state_step():
    s, y, W = step(UpwindState(np.zeros(100), 0.0), ReciprocalMass(mass_cap=1.0),
                   Constant(0.0), 0.004, 1.0)
    assert np.all(s.cells == 0.0) and y == 0.0 and W == 0.0


def test_steady_step_and_run():
    model = ReciprocalMass(mass_cap=3.0)
    s, y, _ = step(UpwindState(np.ones(200), 0.0), model, Constant(0.5), 0.001, 1.0)
    np.testing.assert_allclose(s.cells, 1.0, atol=1e-14)
    cells, t, W, y = run(ReciprocalMass(), Constant(1.0), Constant(0.5, 0.0, 1.0), 1.0, 200)
    np.testing.assert_allclose(cells, 1.0, atol=1e-12)
    np.testing.assert_allclose(y, 0.5, atol=1e-12)
    assert t[-1] == pytest.approx(1.0, abs=1e-14)


def test_drain_step_and_translate():
    dx, dt = 1 / 400, 0.45 / 400
    s, y, _ = step(UpwindState(np.ones(400), 0.0), unit_speed(mass_cap=1.0), Constant(0.0), dt, 1.0)
    assert s.cells[0] == pytest.approx(1.0 - dt / dx)
    np.testing.assert_allclose(s.cells[1:], 1.0)
    cells, *_ = run(unit_speed(), Constant(1.0), Constant(0.0, 0.0, 0.5), 0.5, 400)
    centers = (np.arange(400) + 0.5) / 400
    assert l1_distance_to(cells, (centers >= 0.5).astype(float)) <= 0.05
    cells, t, W, y = run(unit_speed(), Constant(1.0), Constant(0.0, 0.0, 1.5), 1.5, 200)
    assert W[-1] <= 1e-3


def test_zero_data_run():
    cells, t, W, y = run(ReciprocalMass(), Constant(0.0), Constant(0.0, 0.0, 1.0), 1.0, 50)
    assert np.all(cells == 0) and np.all(W == 0) and np.all(y == 0)


def test_discrete_conservation_and_positivity():
    u = PiecewiseLinear([0.0, 0.5, 1.0], [0.0, 1.0, 0.2], nonneg=True)
    rho0 = PiecewiseLinear([0.0, 0.3, 1.0], [2.0, 0.0, 1.0])
    cells, t, W, y = run(ReciprocalMass(), rho0, u, 1.0, 100)
    dt = np.diff(t)
    np.testing.assert_allclose(np.diff(W), dt * (u.eval(t[:-1]) - y[:-1]), atol=1e-14)
    assert cells.min() >= 0.0


def test_cfl_violation():
    with pytest.raises(CFLViolation):
        step(UpwindState(np.ones(100), 0.0), ReciprocalMass(mass_cap=1.0), Constant(0.0), 0.01, 1.0)
    with pytest.raises(ValueError):
        run(ReciprocalMass(), Constant(1.0), Constant(0.0), 1.0, 20)


def test_converges_to_characteristic_solution():
    x = np.linspace(0, 1, 257)
    t = np.linspace(0, 1, 257)
    scn = Scenario(ReciprocalMass(), Samples(1 + 0.5 * np.sin(2 * np.pi * x)),
                   Samples(0.5 + 0.2 * np.sin(np.pi * t)), 1.0)
    sol = solve(scn)
    d = [oracle_distance(sol, nx) for nx in (100, 200)]
    assert 1.6 <= d[0] / d[1] <= 2.4
