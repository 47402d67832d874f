"""Measured invariants of a computed solution, shared by the CLI and the tests."""

from dataclasses import dataclass

import numpy as np

from .characteristics import TAXIS, foot_map
from .solver import integrate_simpson, polynomial_family
from .upwind_oracle import run as upwind_run


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} <= {self.limit:.3e}"


def _panel(a, b, n, inset):
    s = np.linspace(a, b, n + 1)
    eps = 1e-9 * (b - a)
    if inset[0]:
        s[0] += eps
    if inset[1]:
        s[-1] -= eps
    return s


def mass_balance_defects(sol, times, n=256):
    """``W(t) - W(0) - int_0^t (u - y)`` at ``times``.

    The out-flux integral is split at the arrival of the interface curve at
    ``x = 1``, where ``y`` generally has a kink or a jump; panel ends touching
    that time are evaluated just inside the panel.
    """
    u = sol.scenario.u
    t_exit = sol.interface.exit_time
    W0 = sol.mass.values[0]
    panels = []
    for t in np.atleast_1d(times):
        t = float(t)
        if t_exit is not None and 0 < t_exit < t:
            panels.append([(0.0, t_exit, (False, True)), (t_exit, t, (True, False))])
        else:
            panels.append([(0.0, t, (False, False))])
    pts = [_panel(a, b, n, ins) for row in panels for a, b, ins in row]
    y = sol.outflux(np.concatenate(pts)).reshape(len(pts), n + 1)
    k = 0
    out = []
    for t, row in zip(np.atleast_1d(times), panels):
        y_int = 0.0
        for a, b, _ in row:
            if b > a:
                y_int += float(integrate_simpson(y[k], (b - a) / n))
            k += 1
        out.append(float(sol.mass(float(t))) - W0 - (u.integral(0.0, float(t)) - y_int))
    return np.array(out)


def density_bound_slack(sol, n_t=33, n_x=129):
    """Minimum of (a-priori bound - density) and of density over a sample grid."""
    T = sol.scenario.T
    t, x = np.meshgrid(np.linspace(0, T, n_t), np.linspace(0, 1, n_x), indexing="ij")
    rho = sol.density(t, x)
    return float(sol.rho_sup + 1e-9 - rho.max()), float(rho.min())


def mass_bound_slack(sol):
    W = sol.mass.values
    return float(min(W.min(), sol.M - W.max()))


def lipschitz_slack(sol):
    return float(sol.mass.lipschitz_bound + 1e-6 - sol.mass.max_difference_quotient())


def jacobian_errors(model, W, t, x, step=1e-5, h=None, guard=1e-4):
    """Relative error of the foot Jacobians against centered differences.

    Anchors whose difference stencil leaves ``[0, 1]``, straddles the interface
    curve, or whose foot lies within ``guard`` of the corner are dropped.
    Returns the errors and the mask of anchors kept.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    c = foot_map(model, W, t, x, h=h)
    lo = foot_map(model, W, t, x - step, h=h)
    hi = foot_map(model, W, t, x + step, h=h)
    keep = (x - step > 0) & (x + step < 1)
    keep &= (lo.kind == c.kind) & (hi.kind == c.kind)
    keep &= c.value > guard
    fd = (hi.value - lo.value) / (2 * step)
    ta = c.kind == TAXIS
    lam0 = model.lam(np.zeros_like(c.value), W(np.where(ta, c.value, 0.0)))
    jac = np.where(ta, -np.exp(-c.exponent) / lam0, np.exp(-c.exponent))
    err = np.abs(jac - fd) / np.maximum(np.abs(fd), 1e-300)
    return err[keep], keep


def weak_form_checks(sol, tau=None, n=256):
    tau = sol.scenario.T if tau is None else tau
    return sol.weak_form_residuals(polynomial_family(4), tau, n)


def oracle_distance(sol, nx, cfl=0.45):
    """L1 distance at T between upwind cell averages and the solver snapshot."""
    scn = sol.scenario
    cells, *_ = upwind_run(sol.model, scn.rho0, scn.u, scn.T, nx, cfl)
    snap = sol.snapshot(scn.T, max(scn.numerics.nx_snapshot, 2 * nx + 1))
    edges = np.linspace(0.0, 1.0, nx + 1)
    ref = np.diff(snap.antiderivative(edges)) * nx
    return float(np.sum(np.abs(cells - ref)) / nx)


def run_all(sol, seed=0, n_anchor=50, oracle_nx=400, oracle_limit=0.05):
    """Invariant suite used by ``validate``; returns a list of :class:`Check`."""
    scn = sol.scenario
    T, M = scn.T, sol.M
    checks = []
    dx, dw = sol.model.derivative_defects()
    checks.append(Check("velocity lambda_x consistency", dx <= 1e-5, dx, 1e-5))
    checks.append(Check("velocity lambda_W consistency", dw <= 1e-5, dw, 1e-5))
    times = np.linspace(0.0, T, 64)
    mb = float(np.max(np.abs(mass_balance_defects(sol, times))))
    checks.append(Check("mass balance", mb <= 1e-6 * (1 + M), mb, 1e-6 * (1 + M)))
    ms = mass_bound_slack(sol)
    checks.append(Check("W outside [0, M] (negated slack)", ms >= -1e-12, -ms, 1e-12))
    up, low = density_bound_slack(sol)
    checks.append(Check("density above a-priori bound (negated slack)", up >= 0, -up, 0.0))
    checks.append(Check("density negativity (negated min)", low >= 0, -low, 0.0))
    ls = lipschitz_slack(sol)
    checks.append(Check("W difference quotient above bound (negated slack)", ls >= 0, -ls, 0.0))
    wf = float(np.max(np.abs(weak_form_checks(sol))))
    checks.append(Check("weak-form residual (25 test functions)", wf <= 5e-5, wf, 5e-5))
    rng = np.random.default_rng(seed)
    ta, xa = rng.uniform(0.0, T, n_anchor), rng.uniform(0.0, 1.0, n_anchor)
    err, _ = jacobian_errors(sol.model, sol.mass, ta, xa, h=sol.march.h_char)
    je = float(err.max()) if len(err) else 0.0
    checks.append(Check("foot Jacobians vs finite differences", je <= 1e-4, je, 1e-4))
    od = oracle_distance(sol, oracle_nx, scn.numerics.cfl)
    checks.append(Check(f"upwind oracle L1 distance (nx={oracle_nx})", od <= oracle_limit, od, oracle_limit))
    return checks


def all_passed(checks):
    return all(c.passed for c in checks)
