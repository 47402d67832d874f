import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reentrant_flow import Custom, ReciprocalMass, Separable
from reentrant_flow.errors import DerivativeMismatch, MassCapExceeded, NonPositiveVelocity, OutOfDomain
from reentrant_flow.velocity import lattice_bounds


def separable_1px():
    return Separable([1.0, 1.0], [1.0], [1.0, 1.0])


def test_eval_examples():
    assert ReciprocalMass().eval(0.3, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert ReciprocalMass().eval(0.9, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert separable_1px().eval(1.0, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_eval_rejects_outside_domain():
    with pytest.raises(OutOfDomain):
        ReciprocalMass().eval(1.5, 0.0)
    with pytest.raises(OutOfDomain):
        ReciprocalMass().eval(0.5, -1.0)


def _close(b, expect):
    got = (b.lambda_inf, b.lambda_sup, b.lambda_x_sup, b.lambda_w_sup)
    np.testing.assert_allclose(got, expect, rtol=1e-12, atol=1e-15)


def test_bounds_examples():
    _close(ReciprocalMass().bounds(1.0), (0.5, 1.0, 0.0, 1.0))
    _close(ReciprocalMass().bounds(0.0), (1.0, 1.0, 0.0, 1.0))
    _close(separable_1px().bounds(1.0), (0.5, 2.0, 1.0, 2.0))


@pytest.mark.parametrize("model", [ReciprocalMass(), separable_1px(),
                                   Separable([2.0, -1.0, 0.5], [1.0, 0.3], [1.0, 1.0, 0.2])])
def test_bounds_agree_with_lattice_brute_force(model):
    exact = model.bounds(2.0)
    brute = lattice_bounds(model, 2.0, 1024)
    np.testing.assert_allclose(
        [exact.lambda_inf, exact.lambda_sup, exact.lambda_x_sup, exact.lambda_w_sup],
        [brute.lambda_inf, brute.lambda_sup, brute.lambda_x_sup, brute.lambda_w_sup],
        rtol=1e-5)


@pytest.mark.parametrize("model", [ReciprocalMass(), separable_1px(),
                                   Separable([1.0, 0.5, -0.25], [2.0, 1.0], [1.0, 0.5, 0.5])])
def test_derivative_consistency(model):
    dx, dw = model.derivative_defects()
    assert dx <= 1e-5 and dw <= 1e-5


def test_reciprocal_has_no_x_derivative():
    assert ReciprocalMass().bounds(3.7).lambda_x_sup == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_bounds_monotone_in_mass(m1, m2):
    m1, m2 = min(m1, m2), max(m1, m2)
    for model in (ReciprocalMass(), Separable([1.0, 1.0], [1.0, 0.2], [1.0, 1.0])):
        b1, b2 = model.bounds(m1), model.bounds(m2)
        assert b1.lambda_inf >= b2.lambda_inf - 1e-15
        assert b1.lambda_sup <= b2.lambda_sup + 1e-15
        assert b1.lambda_x_sup <= b2.lambda_x_sup + 1e-15
        assert b1.lambda_w_sup <= b2.lambda_w_sup + 1e-15


def test_custom_lattice_resolution_stable():
    lam = lambda x, W: (1 + x) * np.exp(-W)
    lx = lambda x, W: np.exp(-W) + 0 * x
    lw = lambda x, W: -(1 + x) * np.exp(-W)
    m = Custom(lam, lx, lw)
    b1, b2 = m.bounds(1.0, 256), m.bounds(1.0, 512)
    for a, b in zip((b1.lambda_inf, b1.lambda_sup, b1.lambda_x_sup, b1.lambda_w_sup),
                    (b2.lambda_inf, b2.lambda_sup, b2.lambda_x_sup, b2.lambda_w_sup)):
        assert abs(a - b) <= 1e-3 * abs(b)


def test_custom_derivative_mismatch_rejected():
    lam = lambda x, W: 1.0 / (1.0 + W) + 0 * x
    lx = lambda x, W: 0 * x * W
    bad = lambda x, W: -2.0 / (1.0 + W) ** 2 + 0 * x
    with pytest.raises(DerivativeMismatch):
        Custom(lam, lx, bad)
    m = Custom(lam, lx, bad, check=False)
    assert m.derivative_defects()[1] > 0.1


def test_nonpositive_velocity_rejected():
    with pytest.raises(NonPositiveVelocity):
        Separable([1.0, -2.0])
    with pytest.raises(NonPositiveVelocity):
        Custom(lambda x, W: x - 0.5, lambda x, W: 1 + 0 * x, lambda x, W: 0 * x)


def test_clamp_policy():
    m = ReciprocalMass(mass_cap=1.0)
    assert m.eval(0.5, 1.0 + 1e-12) == pytest.approx(0.5)
    assert m.clamp_count == 1
    with pytest.raises(MassCapExceeded):
        m.eval(0.5, 1.01)
