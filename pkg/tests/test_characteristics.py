import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reentrant_flow import ReciprocalMass, Separable
from reentrant_flow.characteristics import (
    TAXIS, XAXIS, ExitRight, TAxis, XAxis, foot_map, interface_curve, jacobian_alpha,
    jacobian_beta, trace,
)
from reentrant_flow.trajectory import MassTrajectory

UNIT = ReciprocalMass()  # speed 1 when W = 0
W0 = MassTrajectory.constant(0.0, 3.0)
W1 = MassTrajectory.constant(1.0, 3.0)
LINEAR_A = Separable([1.0, 1.0])  # lambda = 1 + x
WAVY = MassTrajectory.from_function(lambda t: 1 + 0.5 * np.sin(3 * t), 1.0, n=2 ** 14)
PLUS_X_RECIP = Separable([1.0, 1.0], [1.0], [1.0, 1.0])


def test_backward_examples():
    p = trace(UNIT, W0, 0.5, 0.75)
    assert isinstance(p.foot, XAxis) and p.foot.beta == pytest.approx(0.25, abs=1e-12)
    np.testing.assert_allclose(p.xi, 0.25 + p.s, atol=1e-12)
    p = trace(UNIT, W0, 0.5, 0.25)
    assert isinstance(p.foot, TAxis) and p.foot.alpha == pytest.approx(0.25, abs=1e-12)


def test_forward_exit():
    p = trace(UNIT, W1, 0.0, 0.0, "forward", 3.0)
    assert isinstance(p.foot, ExitRight) and p.foot.time == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(p.xi, p.s / 2, atol=1e-12)


def test_interface_examples():
    assert interface_curve(UNIT, MassTrajectory.constant(0.0, 2.0)).exit_time == pytest.approx(1.0, abs=1e-10)
    assert interface_curve(UNIT, W1).exit_time == pytest.approx(2.0, abs=1e-10)
    assert interface_curve(UNIT, MassTrajectory.constant(0.0, 0.5)).exit_time is None


def test_path_invariants():
    p = trace(PLUS_X_RECIP, WAVY, 0.8, 0.9)
    order = np.argsort(p.s)
    assert np.all(np.diff(p.xi[order]) > 0)
    assert p.position(0.8) == pytest.approx(0.9, abs=1e-13)
    if isinstance(p.foot, TAxis):
        assert p.position(p.foot.alpha) == pytest.approx(0.0, abs=1e-10)
    else:
        assert p.position(0.0) == pytest.approx(p.foot.beta, abs=1e-12)


def test_corner_tie_is_x_axis():
    p = trace(UNIT, W0, 0.5, 0.5)
    assert isinstance(p.foot, XAxis) and p.foot.beta == pytest.approx(0.0, abs=1e-12)


def test_exact_feet_linear_speed():
    # dxi/ds = 1 + xi  =>  1 + xi(s) = (1 + x) exp(s - t)
    t = np.array([0.3, 0.9, 0.9, 0.2])
    x = np.array([0.9, 0.9, 0.2, 0.1])
    f = foot_map(LINEAR_A, W1, t, x)
    beta = (1 + x) * np.exp(-t) - 1
    alpha = t - np.log(1 + x)
    expect = np.where(beta >= 0, beta, alpha)
    np.testing.assert_array_equal(f.kind, np.where(beta >= 0, XAXIS, TAXIS))
    np.testing.assert_allclose(f.value, expect, atol=1e-12)


def _fd_alpha(model, W, t, x, step=1e-5):
    lo, hi = foot_map(model, W, [t, t], [x - step, x + step]).value
    return (hi - lo) / (2 * step)


def test_jacobian_examples():
    p = trace(UNIT, W0, 0.5, 0.25)
    assert jacobian_alpha(UNIT, W0, p) == pytest.approx(-1.0, rel=1e-12)
    p = trace(UNIT, W1, 1.0, 0.25)
    assert jacobian_alpha(UNIT, W1, p) == pytest.approx(-2.0, rel=1e-12)
    assert _fd_alpha(UNIT, W1, 1.0, 0.25) == pytest.approx(-2.0, rel=1e-6)
    p = trace(UNIT, W1, 1.0, 0.9)
    assert jacobian_beta(UNIT, W1, p) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        jacobian_beta(UNIT, W1, trace(UNIT, W1, 1.0, 0.25))


@pytest.mark.parametrize("t,x", [(0.9, 0.3), (0.6, 0.5), (0.2, 0.15)])
def test_jacobian_alpha_matches_fd(t, x):
    p = trace(LINEAR_A, WAVY, t, x)
    assert isinstance(p.foot, TAxis)
    fd = _fd_alpha(LINEAR_A, WAVY, t, x)
    assert abs(jacobian_alpha(LINEAR_A, WAVY, p) - fd) <= 1e-4 * abs(fd)


@pytest.mark.parametrize("t,x", [(0.05, 0.5), (0.1, 0.9), (0.3, 0.95)])
def test_jacobian_beta_matches_fd(t, x):
    Wz = MassTrajectory.constant(0.0, 1.0)
    p = trace(LINEAR_A, Wz, t, x)
    assert isinstance(p.foot, XAxis)
    step = 1e-5
    lo, hi = foot_map(LINEAR_A, Wz, [t, t], [x - step, x + step]).value
    fd = (hi - lo) / (2 * step)
    assert abs(jacobian_beta(LINEAR_A, Wz, p) - fd) <= 1e-4 * abs(fd)
    assert fd == pytest.approx(np.exp(-t), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_feet_monotone_in_x(t, x1, x2):
    if abs(x1 - x2) < 1e-6:
        return
    x1, x2 = min(x1, x2), max(x1, x2)
    f = foot_map(PLUS_X_RECIP, WAVY, [t, t], [x1, x2], h=1e-3)
    k1, k2 = f.kind
    v1, v2 = f.value
    if k1 == XAXIS and k2 == XAXIS:
        assert v1 < v2
    elif k1 == TAXIS and k2 == TAXIS:
        assert v1 > v2
    else:
        assert k1 == TAXIS and k2 == XAXIS


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_semigroup(t, x, frac):
    h = 1e-3
    back = trace(PLUS_X_RECIP, WAVY, t, x, h=h)
    # restart from a recorded sample so no interpolation error enters
    k = int(frac * (len(back.s) - 1))
    s, xi = float(back.s[k]), float(back.xi[k])
    if s >= t or xi >= 1.0:
        return
    fwd = trace(PLUS_X_RECIP, WAVY, s, xi, "forward", t, h=h)
    assert fwd.xi[-1] == pytest.approx(x, abs=2e-10)


def test_step_halving_order():
    t = np.array([0.9, 0.9, 0.5, 0.3])
    x = np.array([0.95, 0.3, 0.9, 0.8])
    hs = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128])
    v = np.array([foot_map(PLUS_X_RECIP, WAVY, t, x, h=h).value for h in hs])
    d = np.abs(np.diff(v, axis=0))
    for j in range(len(t)):
        order = np.polyfit(np.log(hs[1:]), np.log(d[:, j]), 1)[0]
        assert order >= 3.5
