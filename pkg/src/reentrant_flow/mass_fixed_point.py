"""Total mass W(t) by slab-wise Picard iteration of the mass map.

On a slab ``[t0, t0 + delta]`` the mass map is

    F(W)(t) = int_{t0}^t u + int_0^{beta(t)} rho_slab        (foot on x-axis)
    F(W)(t) = int_{alpha(t)}^t u                              (foot on t-axis)

where the foot ``beta`` or ``alpha`` belongs to the characteristic traced
backward from ``(t, 1)`` under the candidate ``W``.  ``rho_slab`` is the density
at ``t0``: the initial data on the first slab, a resampled snapshot afterwards.

The march is written for a batch of problems sharing the velocity model and
the time grid (controls or perturbed data differ per member); a single
problem is a batch of one.
"""

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .characteristics import XAXIS, advance_positions, backward_feet, transported_density
from .errors import NoConvergence
from .profiles import SnapshotStack, as_stack
from .trajectory import Field, MassTrajectory

MAX_ITER = 64


@dataclass
class Numerics:
    """Discretization parameters; ``None`` selects the documented default.

    ``h_char`` defaults to ``T/4096`` and ``h_W`` to ``T/1024``; ``h_W`` is
    refined further when it exceeds half a slab.  ``tol`` defaults to
    ``1e-10 * (1 + M)``.
    """

    h_char: Optional[float] = None
    h_W: Optional[float] = None
    nx_snapshot: int = 4096
    tol: Optional[float] = None
    cfl: float = 0.45
    max_iter: int = MAX_ITER

    def resolved(self, T):
        h_char = T / 4096 if self.h_char is None else float(self.h_char)
        h_W = T / 1024 if self.h_W is None else float(self.h_W)
        return h_char, h_W


@dataclass
class SlabRecord:
    slab_start: float
    delta: float
    iterations: int
    residual: float
    residuals: List[float] = dc_field(default_factory=list)


def _inv(v):
    return math.inf if v == 0 else 1.0 / v


def slab_length(bounds, rho_sup, T):
    """Largest slab on which the mass map is a 1/2-contraction."""
    return min(
        _inv(2.0 * bounds.lambda_x_sup),
        _inv(4.0 * rho_sup * bounds.lambda_w_sup),
        _inv(bounds.lambda_sup),
        float(T),
    )


def mass_bound(rho0, u):
    """M = ||u||_1 + ||rho0||_1, the a-priori ceiling of W."""
    return u.lp_norm(1) + rho0.lp_norm(1)


def rho_sup_bound(bounds, rho0_sup, u_sup, T):
    """Global a-priori sup bound of the density."""
    return math.exp(T * bounds.lambda_x_sup) * max(rho0_sup, u_sup / bounds.lambda_inf)


def lipschitz_bound(bounds, rho0_sup, u_sup, T):
    """A-priori bound of |W'| on [0, T]."""
    grow = math.exp(T * bounds.lambda_x_sup)
    return u_sup + bounds.lambda_sup * max(rho0_sup, u_sup / bounds.lambda_inf * grow)


def time_grid(T, h_W, delta):
    """Number of W intervals on [0, T] and the number per slab.

    ``h_W`` is refined until at least two intervals fit into a slab.
    """
    n = max(int(math.ceil(T / h_W - 1e-9)), 1)
    if delta < T:
        n = max(n, int(math.ceil(2.0 * T / delta - 1e-9)))
    per_slab = max(int(math.floor(delta / (T / n) + 1e-9)), 1)
    return n, min(per_slab, n)


@dataclass
class MarchResult:
    """Raw output of a batched march.

    ``W`` has shape ``(B, n+1)``.  ``starts`` lists the grid index of every slab
    start plus ``n``; ``snapshots[j]`` is the density stack at slab start ``j``
    (``None`` for the first slab, where the initial data are used).
    """

    W: np.ndarray
    T: float
    h_W: float
    h_char: float
    delta: float
    starts: List[int]
    snapshots: list
    records: list

    def slab_of(self, t):
        """Index of the slab whose start is the last one at or before ``t``."""
        k = np.floor(np.asarray(t, dtype=float) / self.h_W + 1e-9).astype(int)
        j = np.searchsorted(np.asarray(self.starts[:-1]), k, side="right") - 1
        return np.clip(j, 0, len(self.starts) - 2)


def _cumulative_mass(rho_start, influx, t0, t, feet, member):
    """Mass in ``[0, x]`` at time ``t`` from the backward feet of ``(t, x)``.

    Everything between the origin and the characteristic entered either
    through ``x = 0`` after ``alpha`` or lay in ``[0, beta]`` at ``t0``.
    """
    out = influx.anti(t, member)
    xa = feet.kind == XAXIS
    m = member[xa]
    out[xa] += rho_start.anti(feet.value[xa], m) - rho_start.anti(np.zeros(len(m)), m)
    out[xa] -= influx.anti(np.full(len(m), t0), m)
    ta = ~xa
    out[ta] -= influx.anti(feet.value[ta], member[ta])
    return out


def _mass_map(field, rho_start, influx, t0, t, h_char, member):
    """One evaluation of F at the anchors ``(t[i], 1)`` of members ``member``."""
    feet = backward_feet(field, t, np.ones_like(t), t0, h_char, member)
    return _cumulative_mass(rho_start, influx, t0, t, feet, member)


def march(model, rho0, u, T, delta, tol, numerics=None, batch=1, snapshot_last=False):
    """Chain Picard slabs over ``[0, T]`` for ``batch`` problems.

    ``rho0`` and ``u`` are profiles or stacks (see :mod:`reentrant_flow.profiles`);
    ``delta`` is the slab length before the safety halving and ``tol`` a scalar or
    per-member Picard tolerance.
    """
    numerics = numerics or Numerics()
    h_char, h_W = numerics.resolved(T)
    delta_used = 0.5 * delta
    n, per_slab = time_grid(T, h_W, delta_used)
    h_W = T / n
    rho0_s, u_s = as_stack(rho0), as_stack(u)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (batch,))
    members = np.arange(batch)
    W = np.empty((batch, n + 1))
    W[:, 0] = rho0_s.anti(np.ones(batch), members) - rho0_s.anti(np.zeros(batch), members)
    x_grid = np.linspace(0.0, 1.0, numerics.nx_snapshot)
    starts = list(range(0, n, per_slab)) + [n]
    snapshots = [None]
    records = [[] for _ in range(batch)]
    rho_start = rho0_s
    # the curve through the origin carries the only jump that mismatched
    # corner data create; its position is tracked for the snapshots
    kink = np.zeros(batch)
    for j in range(len(starts) - 1):
        i0, i1 = starts[j], starts[j + 1]
        t0 = i0 * h_W
        ns = i1 - i0
        wv = np.repeat(W[:, i0:i0 + 1], ns + 1, axis=1)
        fld = Field(model, wv, h_W, t0)
        t_loc = t0 + h_W * np.arange(1, ns + 1)
        active = members.copy()
        hist = [[] for _ in range(batch)]
        it = 0
        while len(active):
            it += 1
            t_all = np.tile(t_loc, len(active))
            mem = np.repeat(active, ns)
            new = _mass_map(fld, rho_start, u_s, t0, t_all, h_char, mem)
            new = new.reshape(len(active), ns)
            res = np.max(np.abs(new - wv[active, 1:]), axis=1)
            wv[active, 1:] = new
            done = np.zeros(len(active), dtype=bool)
            for k, b in enumerate(active):
                r = float(res[k])
                prev = hist[b][-1] if hist[b] else None
                hist[b].append(r)
                if r <= tol[b]:
                    done[k] = True
                elif it > 3 and r > 0.5 * prev:
                    raise NoConvergence(
                        f"slab {j} (t0={t0:.6g}): residual {r:.3e} did not halve "
                        f"(previous {prev:.3e})", slab=j, residuals=hist[b])
                elif it >= numerics.max_iter:
                    raise NoConvergence(
                        f"slab {j} (t0={t0:.6g}): {it} iterations, residual {r:.3e}",
                        slab=j, residuals=hist[b])
            active = active[~done]
        W[:, i0 + 1:i1 + 1] = wv[:, 1:]
        for b in range(batch):
            records[b].append(SlabRecord(t0, ns * h_W, len(hist[b]), hist[b][-1], hist[b]))
        if j < len(starts) - 2 or snapshot_last:
            t1 = i1 * h_W
            kink = advance_positions(fld, kink, t0, t1, h_char, members)
            nx = len(x_grid)
            xs = np.concatenate([np.tile(x_grid, batch), np.nan_to_num(kink, nan=1.0)])
            mem = np.concatenate([np.repeat(members, nx), members])
            t_end = np.full(len(xs), t1)
            rho, feet = transported_density(fld, rho_start, u_s, t0, t_end, xs, h_char, mem)
            cum = _cumulative_mass(rho_start, u_s, t0, t_end, feet, mem)
            m = batch * nx
            snap = SnapshotStack(rho[:m].reshape(batch, -1), cum[:m].reshape(batch, -1),
                                 kink=kink, kink_cum=cum[m:])
            snapshots.append(snap)
            rho_start = snap
    return MarchResult(W, float(T), h_W, h_char, delta_used, starts, snapshots, records)


def _default_tol(M, tol):
    return 1e-10 * (1.0 + M) if tol is None else float(tol)


def prepare(model, rho0, u, T):
    """Model capped at M plus the a-priori quantities of one problem."""
    M = mass_bound(rho0, u)
    capped = model if (model.domain_mass_cap or 0.0) >= M else model.with_cap(M)
    bounds = capped.bounds(M)
    r_sup, u_sup = rho0.lp_norm(math.inf), u.lp_norm(math.inf)
    rho_sup = rho_sup_bound(bounds, r_sup, u_sup, T)
    return capped, M, bounds, rho_sup, lipschitz_bound(bounds, r_sup, u_sup, T)


def picard_slab(model, bounds, rho0_slab, u, t0, delta, tol, h_W=None, h_char=None,
                max_iter=MAX_ITER):
    """Fixed point of the mass map on ``[t0, t0 + delta]``.

    ``u`` is a profile on a time interval containing the slab.  Returns the
    slab time grid, the W samples and a :class:`SlabRecord`.
    """
    if h_W is None:
        h_W = delta / 256
    n = max(int(math.ceil(delta / h_W - 1e-9)), 1)
    h_W = delta / n
    h_char = h_W / 4 if h_char is None else h_char
    numerics = Numerics(h_char=h_char, h_W=h_W, max_iter=max_iter)
    # shift time so that the slab starts at zero for the generic march
    u_shift = _Shifted(as_stack(u), t0)
    res = march(model, rho0_slab, u_shift, delta, 2.0 * delta, tol, numerics)
    values = res.W[0]
    grid = t0 + res.h_W * np.arange(len(values))
    rec = res.records[0][0]
    rec.slab_start = float(t0)
    return grid, values, rec


class _Shifted:
    """A stack viewed with its time origin moved to ``t0``."""

    def __init__(self, stack, t0):
        self.stack = stack
        self.t0 = float(t0)

    def eval(self, s, member=None):
        return self.stack.eval(np.asarray(s) + self.t0, member)

    def anti(self, s, member=None):
        return self.stack.anti(np.asarray(s) + self.t0, member)


def solve_mass(model, rho0, u, T, tol=None, numerics=None):
    """W on ``[0, T]`` with its Lipschitz bound and slab log."""
    return solve_mass_detailed(model, rho0, u, T, tol, numerics)[0]


def solve_mass_detailed(model, rho0, u, T, tol=None, numerics=None):
    """Like :func:`solve_mass` but also returns the :class:`MarchResult` and capped model."""
    capped, M, bounds, rho_sup, lip = prepare(model, rho0, u, T)
    numerics = numerics or Numerics()
    tol = _default_tol(M, numerics.tol if tol is None else tol)
    delta = slab_length(bounds, rho_sup, T)
    res = march(capped, rho0, u, T, delta, tol, numerics)
    traj = MassTrajectory(res.W[0], T, lipschitz_bound=lip, slab_log=res.records[0])
    return traj, res, capped


def write_slab_log(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slab_start", "delta", "iterations", "residual"])
        for r in records:
            w.writerow([f"{r.slab_start:.17g}", f"{r.delta:.17g}", r.iterations, f"{r.residual:.17g}"])
