"""Velocity fields lambda(x, W) and their norm bounds over [0,1] x [0,M].

Three kinds are provided:

* :class:`ReciprocalMass` -- ``lambda = 1 / (1 + W)``
* :class:`Separable` -- ``lambda = a(x) * g(W)`` with ``a`` a polynomial and
  ``g`` a ratio of polynomials (coefficients in ascending order)
* :class:`Custom` -- user evaluators for lambda and both partials

All evaluators broadcast over numpy arrays.  The ``lam``/``lam_x``/``lam_w``
methods are the unchecked hot-path versions used by the integrators;
:meth:`VelocityModel.eval` is the checked public entry point.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DerivativeMismatch, MassCapExceeded, NonPositiveVelocity, OutOfDomain

#: relative slack for W above the mass cap before it is an error
CAP_SLACK = 1e-9
CUSTOM_INFLATION = 1.05


@dataclass(frozen=True)
class VelocityBounds:
    lambda_inf: float
    lambda_sup: float
    lambda_x_sup: float
    lambda_w_sup: float

    def __post_init__(self):
        if not self.lambda_inf > 0:
            raise NonPositiveVelocity(f"infimum of lambda is {self.lambda_inf!r}")
        if self.lambda_inf > self.lambda_sup:
            raise ValueError("lambda_inf exceeds lambda_sup")


class VelocityModel:
    kind = "abstract"
    #: True when lambda does not depend on x, so lambda_x vanishes identically
    x_independent = False

    def __init__(self, mass_cap=None):
        if mass_cap is not None and mass_cap < 0:
            raise ValueError("mass_cap must be nonnegative")
        self.domain_mass_cap = None if mass_cap is None else float(mass_cap)
        self.clamp_count = 0

    # -- hot path -------------------------------------------------------
    def lam(self, x, W):
        raise NotImplementedError

    def lam_x(self, x, W):
        raise NotImplementedError

    def lam_w(self, x, W):
        raise NotImplementedError

    def lam_and_lam_x(self, x, W):
        return self.lam(x, W), self.lam_x(x, W)

    # -- checked API ----------------------------------------------------
    def with_cap(self, mass_cap):
        """Copy of this model with a different ``domain_mass_cap``."""
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.domain_mass_cap = float(mass_cap)
        new.clamp_count = 0
        new.check_positive()
        return new

    def clamp_mass(self, W):
        """Apply the clamp policy to mass values.

        Values above the cap by at most ``CAP_SLACK`` (relative) are clamped and
        counted in ``clamp_count``; larger excursions raise.
        """
        cap = self.domain_mass_cap
        if cap is None:
            return W
        Wa = np.asarray(W, dtype=float)
        top = Wa.max() if Wa.size else 0.0
        if top <= cap:
            return W
        if top > cap + CAP_SLACK * max(cap, 1.0):
            raise MassCapExceeded(f"W={top!r} exceeds mass cap {cap!r}")
        self.clamp_count += int(np.count_nonzero(Wa > cap))
        return np.minimum(Wa, cap) if Wa.ndim else min(float(Wa), cap)

    def eval(self, x, W):
        x = np.asarray(x, dtype=float)
        W = np.asarray(W, dtype=float)
        if np.any((x < 0) | (x > 1)):
            raise OutOfDomain("x outside [0, 1]")
        if np.any(W < 0):
            raise OutOfDomain("W must be nonnegative")
        W = self.clamp_mass(W)
        val = np.asarray(self.lam(x, W), dtype=float)
        val = np.broadcast_to(val, np.broadcast(x, W).shape)
        if np.any(val <= 0):
            raise NonPositiveVelocity("lambda evaluated to a nonpositive value")
        return float(val) if val.ndim == 0 else np.array(val)

    def bounds(self, M, lattice_n=256):
        if lattice_n < 16:
            raise ValueError("lattice_n must be at least 16")
        if M < 0:
            raise ValueError("M must be nonnegative")
        return self._bounds(float(M), int(lattice_n))

    def _bounds(self, M, lattice_n):
        return lattice_bounds(self, M, lattice_n, inflation=CUSTOM_INFLATION)

    def derivative_defects(self, n=9, step=1e-6):
        """Worst scaled mismatch of ``lam_x`` and ``lam_w`` against centred differences.

        Returns ``(defect_x, defect_w)`` where each defect is
        ``max |analytic - fd| / (1 + |analytic|)`` over an ``n x n`` lattice.
        """
        wtop = max(self.domain_mass_cap or 0.0, 1.0)
        xs = np.linspace(step, 1 - step, n)
        ws = np.linspace(step, wtop, n)
        X, Wg = np.meshgrid(xs, ws)
        fd_x = (self.lam(X + step, Wg) - self.lam(X - step, Wg)) / (2 * step)
        fd_w = (self.lam(X, Wg + step) - self.lam(X, Wg - step)) / (2 * step)
        ax = np.broadcast_to(self.lam_x(X, Wg), X.shape)
        aw = np.broadcast_to(self.lam_w(X, Wg), X.shape)
        dx = np.max(np.abs(ax - fd_x) / (1 + np.abs(ax)))
        dw = np.max(np.abs(aw - fd_w) / (1 + np.abs(aw)))
        return float(dx), float(dw)

    def check_derivatives(self, tol=1e-5):
        dx, dw = self.derivative_defects()
        if dx > tol:
            raise DerivativeMismatch(f"lambda_x disagrees with finite differences (defect {dx:.3e})")
        if dw > tol:
            raise DerivativeMismatch(f"lambda_W disagrees with finite differences (defect {dw:.3e})")

    def check_positive(self):
        wtop = self.domain_mass_cap if self.domain_mass_cap is not None else 1.0
        X, Wg = np.meshgrid(np.linspace(0, 1, 33), np.linspace(0, wtop, 33))
        if np.any(np.asarray(self.lam(X, Wg)) <= 0):
            raise NonPositiveVelocity(f"{self.kind} velocity is not positive on the sample lattice")


def lattice_bounds(model, M, lattice_n, inflation=1.0):
    xs = np.linspace(0.0, 1.0, lattice_n + 1)
    ws = np.linspace(0.0, M, lattice_n + 1)
    X, Wg = np.meshgrid(xs, ws)
    lam = np.broadcast_to(model.lam(X, Wg), X.shape)
    lx = np.abs(np.broadcast_to(model.lam_x(X, Wg), X.shape))
    lw = np.abs(np.broadcast_to(model.lam_w(X, Wg), X.shape))
    if lam.min() <= 0:
        raise NonPositiveVelocity("lambda is not positive on the bound lattice")
    return VelocityBounds(
        lambda_inf=float(lam.min()) / inflation,
        lambda_sup=float(lam.max()) * inflation,
        lambda_x_sup=float(lx.max()) * inflation,
        lambda_w_sup=float(lw.max()) * inflation,
    )


class ReciprocalMass(VelocityModel):
    """``lambda(x, W) = 1 / (1 + W)``."""

    kind = "ReciprocalMass"
    x_independent = True

    def lam(self, x, W):
        return np.zeros_like(x, dtype=float) + 1.0 / (1.0 + W)

    def lam_x(self, x, W):
        return np.zeros(np.broadcast(x, W).shape)

    def lam_w(self, x, W):
        return np.zeros_like(x, dtype=float) - 1.0 / (1.0 + W) ** 2

    def lam_and_lam_x(self, x, W):
        return self.lam(x, W), None

    def _bounds(self, M, lattice_n):
        return VelocityBounds(1.0 / (1.0 + M), 1.0, 0.0, 1.0)


# -- polynomial helpers used by Separable ---------------------------------

def horner(c, x):
    """Evaluate ascending coefficients ``c`` at ``x`` (scalar or array)."""
    r = c[-1]
    for ci in c[-2::-1]:
        r = r * x + ci
    return r + np.zeros(np.shape(x)) if len(c) == 1 else r


def _poly(coeffs):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1 or c.size == 0:
        raise ValueError("polynomial coefficients must be a nonempty 1-D list")
    return Polynomial(c)


def _critical_points(p, lo, hi):
    p = p.trim()
    if p.degree() < 1 and abs(p.coef[0]) == 0:
        return []
    r = p.roots()
    r = r[np.abs(r.imag) < 1e-12].real
    return [float(v) for v in r if lo < v < hi]


def rational_range(num, den, lo, hi):
    """Exact (min, max) of ``num/den`` on ``[lo, hi]``; ``den`` must not vanish there."""
    crit = _critical_points(num.deriv() * den - num * den.deriv(), lo, hi)
    pts = np.array([lo, hi] + crit)
    vals = num(pts) / den(pts)
    return float(vals.min()), float(vals.max())


def rational_derivative(num, den):
    return num.deriv() * den - num * den.deriv(), den * den


class Separable(VelocityModel):
    """``lambda(x, W) = a(x) * g_num(W) / g_den(W)``."""

    kind = "Separable"

    def __init__(self, a, g_num=(1.0,), g_den=(1.0,), mass_cap=None):
        super().__init__(mass_cap)
        self.a = _poly(a)
        self.g_num = _poly(g_num)
        self.g_den = _poly(g_den)
        self.da = self.a.deriv()
        self.dg_num, self.dg_den = rational_derivative(self.g_num, self.g_den)
        self.x_independent = self.a.trim().degree() < 1
        self._ca = [float(c) for c in self.a.coef]
        self._cda = [float(c) for c in self.da.coef]
        self._cgn = [float(c) for c in self.g_num.coef]
        self._cgd = [float(c) for c in self.g_den.coef]
        self.check_positive()

    def _g(self, W):
        return horner(self._cgn, W) / horner(self._cgd, W)

    def lam(self, x, W):
        return horner(self._ca, x) * self._g(W)

    def lam_x(self, x, W):
        return horner(self._cda, x) * self._g(W)

    def lam_w(self, x, W):
        return self.a(x) * self.dg_num(W) / self.dg_den(W)

    def lam_and_lam_x(self, x, W):
        g = self._g(W)
        if self.x_independent:
            return horner(self._ca, x) * g, None
        return horner(self._ca, x) * g, horner(self._cda, x) * g

    def check_positive(self):
        wtop = self.domain_mass_cap if self.domain_mass_cap is not None else 1.0
        dlo, dhi = _range(self.g_den, 0.0, wtop)
        if dlo <= 0 <= dhi:
            raise NonPositiveVelocity("denominator of g vanishes on [0, cap]")
        super().check_positive()

    def _bounds(self, M, lattice_n):
        amin, amax = _range(self.a, 0.0, 1.0)
        dlo, dhi = _range(self.da, 0.0, 1.0)
        if M > 0:
            dlo_g, dhi_g = _range(self.g_den, 0.0, M)
            if dlo_g <= 0 <= dhi_g:
                raise NonPositiveVelocity("denominator of g vanishes on [0, M]")
            gmin, gmax = rational_range(self.g_num, self.g_den, 0.0, M)
            gdmin, gdmax = rational_range(self.dg_num, self.dg_den, 0.0, M)
        else:
            gmin = gmax = float(self._g(0.0))
            gdmin = gdmax = float(self.dg_num(0.0) / self.dg_den(0.0))
        corners = [amin * gmin, amin * gmax, amax * gmin, amax * gmax]
        lam_inf = min(corners)
        if lam_inf <= 0:
            raise NonPositiveVelocity("lambda is not positive on [0,1] x [0,M]")
        a_sup = max(abs(amin), abs(amax))
        g_sup = max(abs(gmin), abs(gmax))
        return VelocityBounds(
            lambda_inf=float(lam_inf),
            lambda_sup=float(max(corners)),
            lambda_x_sup=float(max(abs(dlo), abs(dhi)) * g_sup),
            lambda_w_sup=float(a_sup * max(abs(gdmin), abs(gdmax))),
        )


def _range(p, lo, hi):
    return rational_range(p, Polynomial([1.0]), lo, hi)


class Custom(VelocityModel):
    """User-supplied ``lam(x, W)``, ``lam_x(x, W)``, ``lam_w(x, W)``.

    The derivative evaluators are checked against centred differences when
    ``check`` is true (the default). Bounds are lattice maxima inflated by 5%.
    """

    kind = "Custom"

    def __init__(self, lam, lam_x, lam_w, mass_cap=None, check=True, x_independent=False):
        super().__init__(mass_cap)
        self._lam, self._lam_x, self._lam_w = lam, lam_x, lam_w
        self.x_independent = bool(x_independent)
        if check:
            self.check_positive()
            self.check_derivatives()

    def lam(self, x, W):
        return self._lam(x, W)

    def lam_x(self, x, W):
        return self._lam_x(x, W)

    def lam_w(self, x, W):
        return self._lam_w(x, W)

    def lam_and_lam_x(self, x, W):
        if self.x_independent:
            return self._lam(x, W), None
        return self._lam(x, W), self._lam_x(x, W)
