import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reentrant_flow import Constant, PiecewiseConstant, PiecewiseLinear, Samples
from reentrant_flow.errors import OutOfDomain, UnsupportedKind

PC = PiecewiseConstant([0.0, 0.5, 1.0], [2.0, 4.0])
PL = PiecewiseLinear([0.0, 1.0], [0.0, 2.0])


def test_eval_examples():
    assert Constant(1.0).eval(0.37) == 1.0
    assert PC.eval(0.5) == 4.0
    assert PL.eval(0.25) == pytest.approx(0.5, abs=1e-15)


def test_integral_examples():
    assert Constant(3.0).integral(0.0, 1.0) == pytest.approx(3.0, abs=1e-15)
    assert PC.integral(0.0, 1.0) == pytest.approx(3.0, abs=1e-15)
    assert PL.integral(0.0, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_norm_examples():
    assert Constant(2.0).lp_norm(math.inf) == 2.0
    assert Constant(2.0).lp_norm(2) == pytest.approx(2.0, abs=1e-15)
    assert PiecewiseConstant([0.0, 0.5, 1.0], [0.0, 1.0]).lp_norm(1) == pytest.approx(0.5, abs=1e-15)


def test_linear_norm_exact():
    # ||2x||_3 on [0,1] = (8/4)^(1/3)
    assert PL.lp_norm(3) == pytest.approx(2.0 ** (1.0 / 3.0), rel=1e-13)
    s = PiecewiseLinear([0.0, 1.0], [-1.0, 1.0])
    assert s.lp_norm(1) == pytest.approx(0.5, rel=1e-13)


def test_construction_errors():
    with pytest.raises(ValueError):
        PiecewiseConstant([0.0, 0.5, 0.5, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        PiecewiseLinear([0.0, 1.0], [1.0, -1.0], nonneg=True)
    with pytest.raises(ValueError):
        Constant(-1.0, nonneg=True)
    with pytest.raises(OutOfDomain):
        Constant(1.0).eval(1.5)


def test_samples_have_no_corner_derivative():
    with pytest.raises(UnsupportedKind):
        Samples([0.0, 1.0, 2.0]).right_derivative_at_lo()
    assert PL.right_derivative_at_lo() == pytest.approx(2.0)
    assert Constant(5.0).right_derivative_at_lo() == 0.0


def profiles():
    vals = st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=6)

    def pc(v):
        return PiecewiseConstant(np.linspace(0.0, 1.0, len(v) + 1), v)

    def pl(v):
        return PiecewiseLinear(np.linspace(0.0, 1.0, len(v) + 1), v + [v[0]])

    return st.one_of(st.floats(-3.0, 3.0).map(Constant), vals.map(pc), vals.map(pl),
                     vals.filter(lambda v: len(v) >= 2).map(Samples))


@settings(max_examples=80, deadline=None)
@given(profiles(), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_integral_additive(p, a, b, c):
    a, b, c = sorted((a, b, c))
    whole = p.integral(a, c)
    parts = p.integral(a, b) + p.integral(b, c)
    assert abs(whole - parts) <= 1e-13 * max(1.0, abs(whole))


@settings(max_examples=80, deadline=None)
@given(profiles(), st.floats(1.0, 6.0), st.floats(1.0, 6.0))
def test_norm_monotone_in_q(p, q1, q2):
    q1, q2 = min(q1, q2), max(q1, q2)
    n1, n2, ninf = p.lp_norm(q1), p.lp_norm(q2), p.lp_norm(math.inf)
    assert n1 <= n2 * (1 + 1e-12) + 1e-300
    assert n2 <= ninf * (1 + 1e-12) + 1e-300


def test_samples_integral_second_order():
    errs = []
    for n in (17, 33, 65, 129):
        s = np.linspace(0.0, 1.0, n)
        errs.append(abs(Samples(np.exp(s)).integral(0.0, 1.0) - (math.e - 1.0)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_combine_and_scaled():
    c = PC.combine(PL, 1.0)
    x = np.linspace(0.0, 0.999, 50)
    np.testing.assert_allclose(c.eval(x), PC.eval(x) + PL.eval(x), atol=2e-3)
    np.testing.assert_allclose(PL.scaled(3.0).eval(x), 3.0 * PL.eval(x), rtol=1e-14)


def test_samples_csv_roundtrip(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("x,rho\n0,1\n0.5,2\n1,3\n")
    s = Samples.from_csv(str(p))
    assert s.eval(0.25) == pytest.approx(1.5)
