"""Response of the density and the out-flux to small data perturbations.

A sweep solves the base scenario and the perturbed scenarios
``(rho0 + eta*d_rho0, u + eta*d_u)`` once, then measures

* ``sup_t ||rho_eta(t) - rho(t)||_p`` over a fixed 32-point t-grid, and
* ``||y_eta - y||_p`` on ``[0, T]``.
"""

import csv
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import List, Optional

import numpy as np

from .profiles import Constant
from .solver import OUTFLUX_INTERVALS, Scenario, integrate_simpson, solve

N_TIMES = 32


def _node_values(base, shape):
    """Values of ``base`` and ``shape`` on the node set of their sum."""
    v1 = base.combine(shape, 1.0)._piece_values()
    v0 = base.combine(shape, 0.0)._piece_values()
    return v0, v1 - v0


def max_nonneg_amplitude(base, shape):
    """Largest ``eta`` with ``base + eta*shape >= 0``."""
    v, d = _node_values(base, shape)
    neg = d < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(v[neg] / -d[neg]))


@dataclass
class PerturbationSweep:
    """Perturbation experiment around ``base``.

    The shape pair is rescaled so that ``||d_rho0||_p + ||d_u||_p = 1`` (unless
    both vanish).  Amplitudes beyond the nonnegativity limit are clipped to it.
    ``K`` is the common sup bound of all data; filled in when omitted.
    """

    base: Scenario
    d_rho0: object
    d_u: object
    amplitudes: List[float]
    p: float = 1.0
    K: Optional[float] = None
    normalize: bool = True
    clipped: List[float] = dc_field(default_factory=list)

    def __post_init__(self):
        amps = [float(a) for a in self.amplitudes]
        if any(a < 0 for a in amps) or any(b >= a for a, b in zip(amps, amps[1:]) if b > 0):
            raise ValueError("amplitudes must be decreasing and nonnegative")
        self.amplitudes = amps
        size = self.d_rho0.lp_norm(self.p) + self.d_u.lp_norm(self.p)
        if size > 0 and self.normalize:
            self.d_rho0 = self.d_rho0.scaled(1.0 / size)
            self.d_u = self.d_u.scaled(1.0 / size)
        limit = min(max_nonneg_amplitude(self.base.rho0, self.d_rho0),
                    max_nonneg_amplitude(self.base.u, self.d_u))
        self.clipped = [min(a, limit) for a in amps]
        sups = [max(self.perturbed(a).rho0.sup(), self.perturbed(a).u.sup())
                for a in [0.0] + self.clipped]
        if self.K is None:
            self.K = max(sups)
        elif max(sups) > self.K * (1 + 1e-12):
            raise ValueError("perturbed data exceed the sup bound K")
        self._solutions = None

    def perturbed(self, eta):
        b = self.base
        rho0 = b.rho0.combine(self.d_rho0, eta)
        u = b.u.combine(self.d_u, eta)
        rho0.nonneg = u.nonneg = True
        return replace(b, rho0=rho0, u=u)

    def solutions(self):
        """Base solution followed by one solution per clipped amplitude."""
        if self._solutions is None:
            base = solve(self.base)
            self._solutions = [base] + [base if a == 0 else solve(self.perturbed(a))
                                        for a in self.clipped]
        return self._solutions

    def with_p(self, p):
        """Same (already scaled) shapes measured in another ``p``, sharing the solves."""
        other = PerturbationSweep(self.base, self.d_rho0, self.d_u, self.amplitudes, p,
                                  self.K, normalize=False)
        other._solutions = self._solutions
        return other


def solution_stability(sweep):
    """Rows ``(eta, sup_t ||rho_eta(t) - rho(t)||_p)`` in amplitude order."""
    sols = sweep.solutions()
    base = sols[0]
    n = base.scenario.numerics.nx_snapshot
    times = np.linspace(0.0, base.scenario.T, N_TIMES)
    ref = [base.snapshot(t, n) for t in times]
    rows = []
    for eta, sol in zip(sweep.clipped, sols[1:]):
        if sol is base:
            rows.append((eta, 0.0))
            continue
        d = max(sol.snapshot(t, n).combine(r, -1.0).lp_norm(sweep.p) for t, r in zip(times, ref))
        rows.append((eta, float(d)))
    return rows


def outflux_stability(sweep):
    """Rows ``(eta, ||y_eta - y||_p)`` in amplitude order."""
    sols = sweep.solutions()
    base = sols[0]
    T = base.scenario.T
    _, y0 = base.outflux_series()
    rows = []
    for eta, sol in zip(sweep.clipped, sols[1:]):
        _, y = sol.outflux_series()
        d = integrate_simpson(np.abs(y - y0) ** sweep.p, T / OUTFLUX_INTERVALS) ** (1.0 / sweep.p)
        rows.append((eta, float(d)))
    return rows


@dataclass
class PowerFit:
    """``distance ~ coefficient * eta**exponent`` on the positive rows."""

    exponent: float
    coefficient: float
    linear_coefficient: float


def fit_power(rows):
    pts = [(e, d) for e, d in rows if e > 0 and d > 0]
    if len(pts) < 2:
        return PowerFit(math.nan, 0.0, 0.0)
    e, d = np.log(np.array(pts)).T
    k, c = np.polyfit(e, d, 1)
    eta, dist = np.array(pts).T
    lin = float(np.dot(eta, dist) / np.dot(eta, eta))
    return PowerFit(float(k), float(math.exp(c)), lin)


def strictly_decreasing(rows):
    d = [r[1] for r in rows]
    return all(b < a for a, b in zip(d, d[1:]))


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta", "distance"])
        for eta, d in rows:
            w.writerow([f"{eta:.17g}", f"{d:.17g}"])


def zero_shape(base):
    """A vanishing perturbation pair for ``base``."""
    return Constant(0.0, 0.0, 1.0), Constant(0.0, base.u.lo, base.u.hi)
