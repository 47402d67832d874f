"""Demand tracking over piecewise-constant in-flux controls.

    J_p(u) = max(u)^2 + ||y - y_d||_p^2

Every candidate control of a problem is solved with the same slab length,
derived from the box bound ``u_max``, so that costs of different candidates
come from identical discretizations and can be evaluated as one batch.
"""

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .mass_fixed_point import Numerics, march, rho_sup_bound, slab_length
from .profiles import PiecewiseConstant, Samples, StepStack
from .solver import OUTFLUX_INTERVALS, integrate_simpson, outflux_batch

CHUNK = 1024
N_STARTS = 4


def control_numerics(T):
    """Coarse default discretization for cost evaluations."""
    return Numerics(h_char=T / 128, h_W=T / 128, nx_snapshot=129)


@dataclass
class ControlProblem:
    model: object
    rho0: object
    T: float
    y_d: object
    p: float = 2.0
    n_pieces: int = 1
    u_max: float = 1.0
    numerics: Optional[Numerics] = None

    def __post_init__(self):
        self.T = float(self.T)
        if self.n_pieces < 1:
            raise ValueError("n_pieces must be >= 1")
        if not 0 < self.u_max < math.inf:
            raise ValueError("u_max must be positive and finite")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.numerics is None:
            self.numerics = control_numerics(self.T)
        M = self.rho0.lp_norm(1) + self.u_max * self.T
        self.M = M
        self.capped = self.model.with_cap(max(M, self.model.domain_mass_cap or 0.0))
        bounds = self.capped.bounds(M)
        rho_sup = rho_sup_bound(bounds, self.rho0.lp_norm(math.inf), self.u_max, self.T)
        self.delta = slab_length(bounds, rho_sup, self.T)
        self.tol = 1e-10 * (1.0 + M) if self.numerics.tol is None else self.numerics.tol
        self.breakpoints = np.linspace(0.0, self.T, self.n_pieces + 1)
        self.t_samples = np.linspace(0.0, self.T, OUTFLUX_INTERVALS + 1)
        self._yd = np.asarray(self.y_d.eval(self.t_samples), dtype=float)

    def project(self, params):
        return np.clip(np.asarray(params, dtype=float), 0.0, self.u_max)

    def control(self, params):
        return PiecewiseConstant(self.breakpoints, self.project(params), nonneg=True)

    def outflux_batch(self, params):
        """Out-flux samples ``(B, 513)`` of the controls in the rows of ``params``."""
        P = np.atleast_2d(self.project(params))
        out = np.empty((len(P), len(self.t_samples)))
        for c in range(0, len(P), CHUNK):
            blk = P[c:c + CHUNK]
            B = len(blk)
            stack = StepStack(self.breakpoints, blk)
            res = march(self.capped, self.rho0, stack, self.T, self.delta, self.tol,
                        self.numerics, batch=B)
            t = np.tile(self.t_samples, B)
            mem = np.repeat(np.arange(B), len(self.t_samples))
            y = outflux_batch(self.capped, res, self.rho0, stack, t, mem)
            out[c:c + B] = y.reshape(B, -1)
        return out

    def tracking_error(self, y):
        h = self.T / OUTFLUX_INTERVALS
        return integrate_simpson(np.abs(y - self._yd) ** self.p, h) ** (1.0 / self.p)

    def cost_batch(self, params):
        P = np.atleast_2d(self.project(params))
        y = self.outflux_batch(P)
        return np.max(P, axis=1) ** 2 + self.tracking_error(y) ** 2


def evaluate_cost(prob, u_params):
    p = np.asarray(u_params, dtype=float)
    if p.shape != (prob.n_pieces,):
        raise ValueError(f"expected {prob.n_pieces} parameters")
    if np.any(p < 0) or np.any(p > prob.u_max):
        raise ValueError("parameters outside the box [0, u_max]")
    return float(prob.cost_batch(p[None, :])[0])


def demand_from_control(model, rho0, T, params, u_max, numerics=None):
    """Demand equal to the out-flux of a known control, as Samples on the cost grid."""
    probe = ControlProblem(model, rho0, T, Samples(np.zeros(2), 0.0, T), 2.0,
                           len(params), u_max, numerics)
    y = probe.outflux_batch(np.asarray(params, dtype=float)[None, :])[0]
    return Samples(y, 0.0, T)


@dataclass
class OptimizeResult:
    u_best: np.ndarray
    J_best: float
    trace: List[tuple]
    evaluations: int
    exhausted: bool
    starts: List[np.ndarray] = dc_field(default_factory=list)


def start_points(prob, seed):
    """Zeros, mid-box, demand-matched and a seeded uniform start."""
    n = prob.n_pieces
    bp = prob.breakpoints
    matched = np.array([prob.y_d.integral(a, b) / (b - a) for a, b in zip(bp[:-1], bp[1:])])
    rng = np.random.default_rng(seed)
    return [
        np.zeros(n),
        np.full(n, 0.5 * prob.u_max),
        prob.project(matched),
        rng.uniform(0.0, prob.u_max, n),
    ]


def _directions(x, u_max):
    n = len(x)
    dirs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        dirs += [e, -e]
    top = np.isclose(x, x.max(), rtol=0.0, atol=1e-12 * u_max)
    if n > 1 and top.sum() > 1:
        g = top.astype(float)
        dirs += [g, -g]
    return dirs


def prolong(params, n_pieces):
    """Coarse piece values repeated onto ``n_pieces`` (a multiple of their count)."""
    p = np.asarray(params, dtype=float)
    if n_pieces % len(p):
        raise ValueError("n_pieces must be a multiple of the coarse piece count")
    return np.repeat(p, n_pieces // len(p))


def optimize(prob, budget, seed=0, min_step=None, extra_starts=()):
    """Projected coordinate search from four starts (plus any ``extra_starts``).

    Each sweep evaluates ``x +- step * d`` for the unit directions ``d`` (and,
    when several pieces share the maximum, the direction moving them together)
    and moves to the lowest cost if it improves; otherwise the step halves.
    The budget is split evenly between the starts; extra starts (for example
    a prolonged coarse optimum) run first.  ``trace`` holds
    ``(evaluations, best cost so far, params)`` at every accepted move.
    """
    n = prob.n_pieces
    if budget < 50 * n:
        raise ValueError("budget must be at least 50 * n_pieces")
    min_step = prob.u_max * 1e-7 if min_step is None else min_step
    starts = [prob.project(x) for x in extra_starts] + start_points(prob, seed)
    k = len(starts)
    shares = [budget // k] * k
    shares[-1] += budget - sum(shares)
    best_x, best_J = None, math.inf
    trace, used, exhausted = [], 0, False
    for x0, share in zip(starts, shares):
        x = prob.project(x0)
        J = float(prob.cost_batch(x[None, :])[0])
        spent = 1
        if J < best_J:
            best_x, best_J = x.copy(), J
            trace.append((used + spent, best_J, best_x.copy()))
        step = 0.25 * prob.u_max
        while step >= min_step:
            cands = []
            for d in _directions(x, prob.u_max):
                c = prob.project(x + step * d)
                if not np.array_equal(c, x) and not any(np.array_equal(c, o) for o in cands):
                    cands.append(c)
            if not cands:
                step *= 0.5
                continue
            if spent + len(cands) > share:
                exhausted = True
                break
            costs = prob.cost_batch(np.array(cands))
            spent += len(cands)
            k = int(np.argmin(costs))
            if costs[k] < J:
                x, J = cands[k], float(costs[k])
                if J < best_J:
                    best_x, best_J = x.copy(), J
                    trace.append((used + spent, best_J, best_x.copy()))
            else:
                step *= 0.5
        used += spent
    return OptimizeResult(best_x, best_J, trace, used, exhausted, starts)


def grid_scan(prob, steps=200):
    """Brute-force scan with spacing ``u_max / steps`` per piece (``n_pieces <= 2``)."""
    if prob.n_pieces > 2:
        raise ValueError("grid scan is limited to two pieces")
    axis = np.linspace(0.0, prob.u_max, steps + 1)
    mesh = np.meshgrid(*([axis] * prob.n_pieces), indexing="ij")
    P = np.stack([m.ravel() for m in mesh], axis=1)
    J = prob.cost_batch(P)
    k = int(np.argmin(J))
    return P[k], float(J[k]), P, J


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = len(trace[0][2]) if trace else 0
        w.writerow(["iteration", "J"] + [f"u{i}" for i in range(n)])
        for it, J, x in trace:
            w.writerow([it, f"{J:.17g}"] + [f"{v:.17g}" for v in x])
