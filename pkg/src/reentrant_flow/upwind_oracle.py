"""First-order upwind finite volumes for the nonlocal transport equation.

Cells ``i = 0..nx-1`` with averages ``rho_i``.  The velocity is positive, so
the donor of face ``i`` (at ``x = i*dx``) is cell ``i-1``; the inflow face
carries ``u(t)`` directly.  W uses the beginning-of-step averages.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CFLViolation


@dataclass
class UpwindState:
    cells: np.ndarray
    time: float
    cfl: float = 0.45

    @property
    def nx(self):
        return len(self.cells)

    @property
    def dx(self):
        return 1.0 / len(self.cells)

    @property
    def mass(self):
        return float(self.dx * np.sum(self.cells))


def _faces(nx):
    return np.arange(nx + 1) / nx


def fluxes(state, model, u):
    """Face fluxes (inflow, interior faces, outflow) and the mass used."""
    W = state.mass
    lam = model.lam(_faces(state.nx)[1:], model.clamp_mass(W))
    f = np.empty(state.nx + 1)
    f[0] = u.eval(state.time)
    f[1:] = state.cells * lam
    return f, W, lam


def step(state, model, u, dt, lambda_sup):
    """One explicit Euler step of length ``dt``; returns the new state and the out-flux used."""
    f, W, lam = fluxes(state, model, u)
    if np.max(lam) * dt > state.cfl * state.dx * (1 + 1e-12):
        raise CFLViolation(f"velocity {np.max(lam):.6g} exceeds the bound {lambda_sup:.6g} used for dt")
    cells = state.cells - dt / state.dx * (f[1:] - f[:-1])
    return UpwindState(cells, state.time + dt, state.cfl), float(f[-1]), W


def run(model, rho0, u, T, nx, cfl=0.45):
    """March to ``T``; returns final averages, sample times, W and out-flux series.

    Series entries ``k`` belong to the start of step ``k``; the last step is
    shortened to land on ``T``.
    """
    if nx < 50:
        raise ValueError("need nx >= 50")
    M = u.lp_norm(1) + rho0.lp_norm(1)
    if model.domain_mass_cap is None or model.domain_mass_cap < M:
        model = model.with_cap(M)
    lambda_sup = model.bounds(M).lambda_sup
    edges = np.linspace(0.0, 1.0, nx + 1)
    cells = np.diff(rho0.antiderivative(edges)) * nx
    state = UpwindState(cells, 0.0, cfl)
    dt_full = cfl * state.dx / lambda_sup
    n_steps = int(np.ceil(T / dt_full - 1e-9))
    times, Ws, ys = [], [], []
    for k in range(n_steps):
        dt = min(dt_full, T - state.time) if k == n_steps - 1 else dt_full
        times.append(state.time)
        state, y, W = step(state, model, u, dt, lambda_sup)
        Ws.append(W)
        ys.append(y)
    times.append(state.time)
    Ws.append(state.mass)
    ys.append(fluxes(state, model, u)[0][-1])
    return state.cells, np.array(times), np.array(Ws), np.array(ys)


def l1_distance_to(cells, profile_values_on_cells):
    """L1 distance between cell averages and another set of cell values."""
    return float(np.sum(np.abs(cells - profile_values_on_cells)) / len(cells))
