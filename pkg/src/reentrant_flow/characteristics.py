"""Characteristic curves d xi / ds = lambda(xi(s), W(s)).

Backward traces are computed in lockstep on the grid ``t_stop + k*h``: an
anchor joins the march with one partial step down to the grid, after which
every active curve shares the same time level, so W is a scalar per stage.
The exponent ``integral lambda_x(xi(s), W(s)) ds`` is carried as an extra RK4
component, which reduces to Simpson's rule on the stage points.  Crossings of
``x = 0`` (backward) or ``x = 1`` (forward) are localized by bracketed root finding
on the step fraction.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import IntegratorStall
from .trajectory import Field

XAXIS = 0
TAXIS = 1

FOOT_TOL = 1e-12
STALL_SPEED = 1e-14
DEFAULT_STEPS = 4096


@dataclass(frozen=True)
class TAxis:
    alpha: float


@dataclass(frozen=True)
class XAxis:
    beta: float


@dataclass(frozen=True)
class ExitRight:
    time: float


Foot = Union[TAxis, XAxis, ExitRight]


@dataclass
class CharacteristicPath:
    anchor: tuple
    s: np.ndarray
    xi: np.ndarray
    foot: Optional[Foot]
    #: integral of lambda_x along the traced span, in increasing s
    exponent: float = 0.0

    def position(self, s):
        order = np.argsort(self.s, kind="stable")
        return np.interp(s, self.s[order], self.xi[order])

    @property
    def exit_time(self):
        return self.foot.time if isinstance(self.foot, ExitRight) else None


@dataclass
class FootArrays:
    kind: np.ndarray
    value: np.ndarray
    exponent: np.ndarray

    @property
    def is_taxis(self):
        return self.kind == TAXIS


def _clip01(x):
    return np.minimum(np.maximum(x, 0.0), 1.0)


def rk4_step(field, s0, xi, E, h, member=None, sign=-1.0):
    """One classic RK4 step of size ``h`` in direction ``sign`` from time ``s0``.

    ``s0`` and ``h`` may be scalars (lockstep) or per-element arrays.
    Returns the new position, new exponent integral and the first-stage speed.
    """
    model = field.model
    if np.ndim(s0) == 0 and np.ndim(h) == 0:
        def W(s):
            return field.at_scalar_time(s, member)
    else:
        def W(s):
            return field.at(s, member)
    half = 0.5 * h
    w1, w2, w4 = W(s0), W(s0 + sign * half), W(s0 + sign * h)
    k1, m1 = model.lam_and_lam_x(xi, w1)
    k2, m2 = model.lam_and_lam_x(_clip01(xi + sign * half * k1), w2)
    k3, m3 = model.lam_and_lam_x(_clip01(xi + sign * half * k2), w2)
    k4, m4 = model.lam_and_lam_x(_clip01(xi + sign * h * k3), w4)
    xi_new = xi + sign * (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if m1 is not None:
        E = E + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    return xi_new, E, k1


def _bisect_crossing(field, s0, xi0, E0, h, member, sign, target, n_iter):
    """Step fraction at which a step of size ``theta*h`` lands on ``target``.

    ``xi0`` is on the near side of ``target`` and a full step reaches or passes
    it.  The bracket ``[lo, hi]`` is shrunk by regula falsi with the Illinois
    modification, switching to plain bisection after 30 rounds, until its
    width in time is below ``FOOT_TOL / 10``.  Returns ``hi`` (on or past the
    target) and the exponent integral at that fraction.
    """
    lo = np.zeros_like(xi0)
    hi = np.ones_like(xi0)
    xn, _, _ = rk4_step(field, s0, xi0, E0, h, member, sign)
    g_lo = sign * (xi0 - target)   # < 0: not yet there
    g_hi = sign * (xn - target)    # >= 0: reached
    last = np.zeros(len(xi0), dtype=np.int8)
    width_tol = 0.1 * FOOT_TOL / np.maximum(np.abs(h), 1e-300) * np.ones_like(xi0)
    active = hi - lo > width_tol
    for it in range(30 + n_iter):
        a = np.flatnonzero(active)
        if not len(a):
            break
        if it < 30:
            mid = lo[a] - g_lo[a] * (hi[a] - lo[a]) / (g_hi[a] - g_lo[a])
            mid = np.minimum(np.maximum(mid, lo[a]), hi[a])
        else:
            mid = 0.5 * (lo[a] + hi[a])
        hv = h if np.ndim(h) == 0 else h[a]
        sv = s0 if np.ndim(s0) == 0 else s0[a]
        mem = None if member is None else member[a]
        xm, _, _ = rk4_step(field, sv, xi0[a], E0[a], mid * hv, mem, sign)
        gm = sign * (xm - target)
        before = gm < 0
        ia, ib = a[before], a[~before]
        g_hi[ia[last[ia] == -1]] *= 0.5
        g_lo[ib[last[ib] == 1]] *= 0.5
        lo[ia], g_lo[ia], last[ia] = mid[before], gm[before], -1
        hi[ib], g_hi[ib], last[ib] = mid[~before], gm[~before], 1
        hit = ib[gm[~before] == 0]
        lo[hit] = hi[hit]
        active[a] = hi[a] - lo[a] > width_tol[a]
    theta = hi
    _, E, _ = rk4_step(field, s0, xi0, E0, theta * h, member, sign)
    return theta, E


def _n_bisect(h):
    """Bisection rounds needed to bring a step of size ``h`` below ``FOOT_TOL / 10``."""
    return int(np.ceil(np.log2(max(np.max(np.abs(h)), 1e-300) / (0.1 * FOOT_TOL)))) + 2


def backward_feet(field, t, x, t_stop, h, member=None, record=False):
    """Trace every anchor ``(t[i], x[i])`` backward until ``x = 0`` or ``s = t_stop``.

    Returns :class:`FootArrays`; with ``record`` (single anchor only) also the
    list of ``(s, xi)`` samples.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t, x = np.broadcast_arrays(t, x)
    t, x = t.ravel(), x.ravel()
    n = len(t)
    if member is not None:
        member = np.broadcast_to(np.asarray(member), (n,)).ravel()
    kind = np.full(n, XAXIS, dtype=np.int8)
    foot = np.empty(n)
    expo = np.zeros(n)
    samples = [(float(t[0]), float(x[0]))] if record else None

    steps = np.ceil((t - t_stop) / h - 1e-9).astype(np.int64)
    steps = np.maximum(steps, 0)
    at_stop = steps == 0
    foot[at_stop] = x[at_stop]
    on_edge = ~at_stop & (x <= 0.0)
    kind[on_edge] = TAXIS
    foot[on_edge] = t[on_edge]
    pending = np.flatnonzero(~at_stop & ~on_edge)
    pending = pending[np.argsort(-steps[pending], kind="stable")]
    pend_steps = steps[pending]

    n_bis = _n_bisect(h)
    crossings = []
    a_idx = np.empty(0, dtype=np.int64)
    a_xi = np.empty(0)
    a_E = np.empty(0)
    ptr = 0
    m = int(pend_steps[0]) if len(pending) else 0
    while m >= 1:
        s_hi = t_stop + m * h
        s_lo = t_stop + (m - 1) * h if m > 1 else t_stop
        end = ptr
        while end < len(pending) and pend_steps[end] == m:
            end += 1
        join = pending[ptr:end]
        ptr = end

        parts = []
        if len(a_idx):
            mem = None if member is None else member[a_idx]
            xi_n, E_n, k1 = rk4_step(field, s_hi, a_xi, a_E, h, mem)
            _check_stall(k1)
            parts.append((a_idx, a_xi, a_E, xi_n, E_n, np.full(len(a_idx), s_hi), np.full(len(a_idx), h)))
        if len(join):
            mem = None if member is None else member[join]
            hj = t[join] - s_lo
            xj, Ej = x[join], np.zeros(len(join))
            xi_n, E_n, k1 = rk4_step(field, t[join], xj, Ej, hj, mem)
            _check_stall(k1)
            parts.append((join, xj, Ej, xi_n, E_n, t[join], hj))

        idx, xi0, E0, xi_n, E_n, s0, he = (np.concatenate(c) for c in zip(*parts))
        cross = xi_n <= 0.0
        if np.any(cross):
            c = np.flatnonzero(cross)
            crossings.append((idx[c], s0[c], xi0[c], E0[c], he[c]))
        keep = ~cross
        a_idx, a_xi, a_E = idx[keep], xi_n[keep], E_n[keep]
        if record and len(a_idx):
            samples.append((s_lo, float(a_xi[0])))
        if m == 1:
            foot[a_idx] = a_xi
            expo[a_idx] = a_E
            break
        m -= 1
        if not len(a_idx):
            if ptr >= len(pending):
                break
            m = int(pend_steps[ptr])
    if crossings:
        # localize every recorded crossing in one batched root-finding pass
        ic, s0, xi0, E0, he = (np.concatenate(c) for c in zip(*crossings))
        mem = None if member is None else member[ic]
        theta, Ec = _bisect_crossing(field, s0, xi0, E0, he, mem, -1.0, 0.0, n_bis)
        alpha = s0 - theta * he
        corner = alpha - t_stop <= FOOT_TOL
        kind[ic] = np.where(corner, XAXIS, TAXIS)
        foot[ic] = np.where(corner, 0.0, alpha)
        expo[ic] = Ec
        if record:
            samples.append((float(alpha[0]), 0.0))
    feet = FootArrays(kind, foot, expo)
    return (feet, samples) if record else feet


def _check_stall(k1):
    if np.size(k1) and np.min(k1) < STALL_SPEED:
        raise IntegratorStall("characteristic speed dropped below 1e-14")


def forward_trace(field, t, x, t_stop, h):
    """Trace a single curve forward from ``(t, x)`` until ``x = 1`` or ``s = t_stop``."""
    s, xi, E = float(t), np.array([float(x)]), np.zeros(1)
    ss, xs = [s], [float(x)]
    if xi[0] >= 1.0:
        return np.array(ss), np.array(xs), ExitRight(s), 0.0
    n_bis = _n_bisect(h)
    k = 0
    foot = None
    while s < t_stop - 1e-14 * max(1.0, abs(t_stop)):
        s_next = min(t + (k + 1) * h, t_stop)
        hs = s_next - s
        xi_n, E_n, k1 = rk4_step(field, s, xi, E, hs, None, 1.0)
        _check_stall(k1)
        if xi_n[0] >= 1.0:
            theta, E = _bisect_crossing(field, s, xi, E, hs, None, 1.0, 1.0, n_bis)
            s_exit = s + float(theta[0]) * hs
            ss.append(s_exit)
            xs.append(1.0)
            foot = ExitRight(s_exit)
            break
        s, xi, E = s_next, xi_n, E_n
        ss.append(s)
        xs.append(float(xi[0]))
        k += 1
    return np.array(ss), np.array(xs), foot, float(E[0])


def advance_positions(field, x, t0, t1, h, member=None):
    """Move points of many members forward from ``t0`` to ``t1`` in lockstep.

    Points reaching ``x = 1`` are returned as ``nan``.
    """
    xi = np.array(x, dtype=float)
    E = np.zeros_like(xi)
    gone = ~(xi < 1.0)
    s, k = float(t0), 0
    while s < t1 - 1e-14 * max(1.0, abs(t1)) and not gone.all():
        s_next = min(t0 + (k + 1) * h, t1)
        xi_n, E, k1 = rk4_step(field, s, np.where(gone, 1.0, xi), E, s_next - s, member, 1.0)
        _check_stall(k1)
        gone |= xi_n >= 1.0
        xi = np.where(gone, 1.0, xi_n)
        s, k = s_next, k + 1
    return np.where(gone, np.nan, xi)


def _default_h(W, h):
    return W.T / DEFAULT_STEPS if h is None else float(h)


def trace(model, W, t, x, direction="backward", t_stop=None, h=None):
    """Trace the characteristic through ``(t, x)``.

    ``W`` is a :class:`~reentrant_flow.trajectory.MassTrajectory`. Backward
    traces stop at ``x = 0`` (:class:`TAxis`) or ``s = t_stop`` (default 0,
    :class:`XAxis`); forward traces stop at ``x = 1`` (:class:`ExitRight`) or at
    ``t_stop`` (default ``W.T``; foot ``None``).
    """
    h = _default_h(W, h)
    field = W.field(model)
    if direction == "backward":
        t_stop = 0.0 if t_stop is None else float(t_stop)
        feet, samples = backward_feet(field, [t], [x], t_stop, h, record=True)
        s, xi = map(np.array, zip(*samples))
        if feet.kind[0] == TAXIS:
            foot = TAxis(float(feet.value[0]))
        else:
            foot = XAxis(float(feet.value[0]))
        return CharacteristicPath((t, x), s, xi, foot, float(feet.exponent[0]))
    if direction == "forward":
        t_stop = W.T if t_stop is None else float(t_stop)
        s, xi, foot, E = forward_trace(field, t, x, t_stop, h)
        return CharacteristicPath((t, x), s, xi, foot, E)
    raise ValueError(f"unknown direction {direction!r}")


def interface_curve(model, W, T=None, h=None):
    """The curve through the origin separating boundary- and initial-data regions.

    The returned path's ``exit_time`` is the time it reaches ``x = 1``, or
    ``None`` when that happens after ``T``.
    """
    T = W.T if T is None else float(T)
    return trace(model, W, 0.0, 0.0, "forward", T, h)


def foot_map(model, W, t, x, t_stop=0.0, h=None):
    """Vectorized backward feet of many anchors (no sample recording)."""
    return backward_feet(W.field(model), t, x, t_stop, _default_h(W, h))


def jacobian_alpha(model, W, path):
    """d(alpha)/dx for a path ending on the t-axis."""
    if not isinstance(path.foot, TAxis):
        raise ValueError("jacobian_alpha needs a path with a t-axis foot")
    a = path.foot.alpha
    return -math.exp(-path.exponent) / float(model.lam(0.0, W(a)))


def jacobian_beta(model, W, path):
    """d(beta)/dx for a path ending on the x-axis."""
    if not isinstance(path.foot, XAxis):
        raise ValueError("jacobian_beta needs a path with an x-axis foot")
    return math.exp(-path.exponent)


def transported_density(field, rho_start, influx, t_start, t, x, h, member=None):
    """Density at ``(t, x)`` by the characteristic formula, restarting at ``t_start``.

    ``rho_start`` is the density at ``t_start`` and ``influx`` the boundary
    flux, both as stacks (see :mod:`reentrant_flow.profiles`).  Returns the
    density and the feet.
    """
    feet = backward_feet(field, t, x, t_start, h, member)
    rho = np.empty(len(feet.kind))
    decay = np.exp(-feet.exponent)
    xa = feet.kind == XAXIS
    if np.any(xa):
        mem = None if member is None else member[xa]
        rho[xa] = rho_start.eval(feet.value[xa], mem) * decay[xa]
    ta = ~xa
    if np.any(ta):
        mem = None if member is None else member[ta]
        alpha = feet.value[ta]
        lam0 = field.model.lam(np.zeros(len(alpha)), field.at(alpha, mem))
        rho[ta] = influx.eval(alpha, mem) / lam0 * decay[ta]
    return rho, feet
