"""Weak solution by the characteristic formula, with diagnostics.

The density at ``(t, x)`` is transported along the backward characteristic
to the start of the slab containing ``t``: data there are either the stored
density snapshot (x-axis foot) or the in-flux (t-axis foot).  With
``from_origin=True`` the trace runs to ``t = 0`` and uses the initial data
directly; the out-flux always does so.
"""

import csv
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .characteristics import forward_trace, transported_density, CharacteristicPath
from .errors import MassCapExceeded
from .mass_fixed_point import (
    Numerics,
    march,
    mass_bound,
    prepare,
    slab_length,
    _default_tol,
)
from .profiles import Samples, as_stack
from .trajectory import Field, MassTrajectory

OUTFLUX_INTERVALS = 512


@dataclass
class Scenario:
    model: object
    rho0: object
    u: object
    T: float
    numerics: Numerics = dc_field(default_factory=Numerics)

    def __post_init__(self):
        self.T = float(self.T)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.rho0.lo != 0.0 or self.rho0.hi != 1.0:
            raise ValueError("rho0 must live on [0, 1]")
        if self.u.lo > 0.0 or self.u.hi < self.T:
            raise ValueError("u must cover [0, T]")
        if self.rho0.min_value() < 0:
            raise ValueError("rho0 has negative values")
        if self.u.min_value() < 0:
            raise ValueError("u has negative values")
        cap = self.model.domain_mass_cap
        if cap is not None and cap < self.mass_bound * (1 - 1e-12):
            raise MassCapExceeded(f"model mass cap {cap} below M = {self.mass_bound}")

    @property
    def mass_bound(self):
        return mass_bound(self.rho0, self.u)


def integrate_simpson(y, h):
    """Composite Simpson on an odd number of equally spaced samples."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] - 1
    if n < 2 or n % 2:
        raise ValueError("Simpson needs an even number of intervals")
    return h / 3.0 * (y[..., 0] + y[..., -1] + 4.0 * y[..., 1:-1:2].sum(-1) + 2.0 * y[..., 2:-1:2].sum(-1))


def density_batch(model, res, rho0, u, t, x, member, from_origin=False):
    """Density of batch members ``member`` at points ``(t, x)`` given a march result."""
    t = np.asarray(t, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    member = np.broadcast_to(np.asarray(member), t.shape).ravel()
    u_s, rho0_s = as_stack(u), as_stack(rho0)
    fld = Field(model, res.W, res.h_W)
    out = np.empty(len(t))
    if from_origin:
        out[:], _ = transported_density(fld, rho0_s, u_s, 0.0, t, x, res.h_char, member)
        return out
    slab = res.slab_of(t)
    for j in np.unique(slab):
        sel = np.flatnonzero(slab == j)
        start = rho0_s if j == 0 else res.snapshots[j]
        t0 = res.starts[j] * res.h_W
        out[sel], _ = transported_density(fld, start, u_s, t0, t[sel], x[sel], res.h_char, member[sel])
    return out


def outflux_batch(model, res, rho0, u, t, member, from_origin=False):
    t = np.asarray(t, dtype=float).ravel()
    member = np.broadcast_to(np.asarray(member), t.shape).ravel()
    rho = density_batch(model, res, rho0, u, t, np.ones_like(t), member, from_origin)
    w = Field(model, res.W, res.h_W).at(t, member)
    return rho * model.lam(np.ones_like(t), w)


class Solution:
    """Computed solution of one scenario.

    ``model`` is the scenario's velocity capped at ``M``; ``bounds`` and
    ``rho_sup`` are the a-priori quantities the slab length was built from.
    """

    def __init__(self, scenario, model, march_result, member=0, bounds=None,
                 rho_sup=None, lipschitz_bound=None):
        self.scenario = scenario
        self.model = model
        self.march = march_result
        self.member = member
        self.bounds = bounds
        self.rho_sup = rho_sup
        self.M = scenario.mass_bound
        self.mass = MassTrajectory(march_result.W[member], scenario.T,
                                   lipschitz_bound=lipschitz_bound,
                                   slab_log=march_result.records[member])
        self._interface = None

    @property
    def interface(self):
        """Characteristic from the origin; ``interface.exit_time`` is its arrival at x = 1."""
        if self._interface is None:
            fld = Field(self.model, self.march.W[self.member:self.member + 1], self.march.h_W)
            s, xi, foot, E = forward_trace(fld, 0.0, 0.0, self.scenario.T, self.march.h_char)
            self._interface = CharacteristicPath((0.0, 0.0), s, xi, foot, E)
        return self._interface

    def density(self, t, x, from_origin=False):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        shape = t.shape
        self._check_point(t, x)
        rho = density_batch(self.model, self.march, self.scenario.rho0, self.scenario.u,
                            t, x, self.member, from_origin)
        return rho.reshape(shape) if shape else float(rho[0])

    def _check_point(self, t, x):
        T = self.scenario.T
        if np.any(t < -1e-12 * T) or np.any(t > T * (1 + 1e-12)):
            raise ValueError("t outside [0, T]")
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise ValueError("x outside [0, 1]")

    def outflux(self, t):
        """y(t) = rho(t, 1) lambda(1, W(t)), traced back to the data at t = 0.

        Tracing to the origin keeps density jumps sharp; slab snapshots would
        smear them over one snapshot cell.
        """
        t = np.asarray(t, dtype=float)
        y = outflux_batch(self.model, self.march, self.scenario.rho0, self.scenario.u, t,
                          self.member, from_origin=True)
        return y.reshape(t.shape) if t.shape else float(y[0])

    def outflux_series(self, n=OUTFLUX_INTERVALS):
        t = np.linspace(0.0, self.scenario.T, n + 1)
        return t, self.outflux(t)

    def backlog(self, y_d, t, n=OUTFLUX_INTERVALS):
        """Produced minus demanded output on ``[0, t]``."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        frac = np.linspace(0.0, 1.0, n + 1)
        s = flat[:, None] * frac[None, :]
        y = self.outflux(s.ravel()).reshape(s.shape)
        produced = integrate_simpson(y, flat / n)
        out = produced - np.array([y_d.integral(0.0, ti) for ti in flat])
        return out.reshape(t.shape) if t.shape else float(out[0])

    def snapshot(self, t, n):
        if n < 2:
            raise ValueError("need n >= 2")
        x = np.linspace(0.0, 1.0, n)
        rho = self.density(np.full(n, float(t)), x)
        return Samples(np.maximum(rho, 0.0), 0.0, 1.0, nonneg=True)

    def weak_form_residuals(self, phis, tau, n=256):
        """Weak-form defect for each test function in ``phis`` on ``[0, tau] x [0, 1]``."""
        if not 0 < tau <= self.scenario.T * (1 + 1e-12):
            raise ValueError("tau must lie in (0, T]")
        tg = np.linspace(0.0, tau, n + 1)
        xg = np.linspace(0.0, 1.0, n + 1)
        TT, XX = np.meshgrid(tg, xg, indexing="ij")
        rho = self.density(TT, XX)
        lam = self.model.lam(XX, self.mass(TT))
        u_t = self.scenario.u.eval(tg)
        r0 = self.scenario.rho0.eval(xg)
        ht, hx = tau / n, 1.0 / n
        out = []
        for phi in phis:
            inner = rho * (phi.dt(TT, XX, tau) + lam * phi.dx(TT, XX, tau))
            total = integrate_simpson(integrate_simpson(inner, hx), ht)
            total += integrate_simpson(u_t * phi(tg, 0.0 * tg, tau), ht)
            total += integrate_simpson(r0 * phi(0.0 * xg, xg, tau), hx)
            out.append(float(total))
        return np.array(out)

    def weak_form_residual(self, phi, tau, n=256):
        return float(self.weak_form_residuals([phi], tau, n)[0])


def solve(scn):
    """Solve a scenario: W by slab-wise Picard iteration, then the density handle."""
    capped, M, bounds, rho_sup, lip = prepare(scn.model, scn.rho0, scn.u, scn.T)
    tol = _default_tol(M, scn.numerics.tol)
    delta = slab_length(bounds, rho_sup, scn.T)
    res = march(capped, scn.rho0, scn.u, scn.T, delta, tol, scn.numerics)
    return Solution(scn, capped, res, bounds=bounds, rho_sup=rho_sup, lipschitz_bound=lip)


@dataclass
class TestFunction:
    """phi(t, x) = (tau - t)^a (1 - x)^b t^i x^j; vanishes at t = tau and x = 1."""

    i: int
    j: int
    a: int = 1
    b: int = 1

    __test__ = False  # not a pytest class

    def __call__(self, t, x, tau):
        return (tau - t) ** self.a * (1 - x) ** self.b * t ** self.i * x ** self.j

    def dt(self, t, x, tau):
        f = _dpow(t, tau, self.i, self.a)
        return f * (1 - x) ** self.b * x ** self.j

    def dx(self, t, x, tau):
        g = _dpow(x, 1.0, self.j, self.b)
        return (tau - t) ** self.a * t ** self.i * g


def _dpow(s, c, k, m):
    """d/ds of s^k (c - s)^m."""
    d = -m * s ** k * (c - s) ** (m - 1) if m else 0.0 * s
    if k:
        d = d + k * s ** (k - 1) * (c - s) ** m
    return d


def polynomial_family(degree=4):
    return [TestFunction(i, j) for i in range(degree + 1) for j in range(degree + 1)]


@dataclass
class CompatibilityReport:
    c0: float
    c1: Optional[float] = None

    def defects(self):
        return (self.c0,) if self.c1 is None else (self.c0, self.c1)


def check_compatibility(scn, order="C0"):
    """Defects of the zeroth and first order corner conditions at the origin."""
    order = order.upper()
    if order not in ("C0", "C1"):
        raise ValueError("order must be C0 or C1")
    model = scn.model.with_cap(scn.mass_bound) if scn.model.domain_mass_cap is None else scn.model
    W0 = scn.rho0.total()
    lam0 = float(model.lam(0.0, W0))
    u0 = scn.u.value_at_lo()
    r0 = scn.rho0.value_at_lo()
    c0 = u0 / lam0 - r0
    if order == "C0":
        return CompatibilityReport(c0)
    du = scn.u.right_derivative_at_lo()
    dr = scn.rho0.right_derivative_at_lo()
    dW = u0 - scn.rho0.value_at_hi() * float(model.lam(1.0, W0))
    lw = float(model.lam_w(0.0, W0))
    lx = float(model.lam_x(0.0, W0))
    c1 = (du * lam0 - u0 * lw * dW) / lam0 ** 2 + lam0 * dr + lx * r0
    return CompatibilityReport(c0, c1)


def write_series(path, names, *columns):
    """CSV with a header row and 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*columns):
            w.writerow([f"{float(v):.17g}" for v in row])
