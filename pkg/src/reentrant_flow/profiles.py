"""Functions on an interval: initial density, in-flux and demand data.

Four declarative kinds cover all data the solver accepts.  Integrals of the
piecewise kinds are exact; :class:`Samples` integrates its own linear
interpolant exactly, so ``integral`` is always the antiderivative of ``eval``.
"""

import csv

import numpy as np

from .errors import OutOfDomain, UnsupportedKind

DOMAIN_SLACK = 1e-12


class Profile:
    kind = "abstract"

    def __init__(self, lo, hi, nonneg=False):
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        self.lo, self.hi = lo, hi
        self.nonneg = bool(nonneg)

    @property
    def length(self):
        return self.hi - self.lo

    def _check_nonneg(self, values):
        if self.nonneg and np.any(np.asarray(values) < 0):
            raise ValueError(f"{self.kind} profile has negative values but is declared nonnegative")

    def _clip(self, s):
        s = np.asarray(s, dtype=float)
        slack = DOMAIN_SLACK * self.length
        if np.any((s < self.lo - slack) | (s > self.hi + slack)):
            raise OutOfDomain(f"argument outside [{self.lo}, {self.hi}]")
        return np.clip(s, self.lo, self.hi)

    def eval(self, s):
        out = self._eval(self._clip(s))
        return float(out) if np.ndim(out) == 0 else out

    def antiderivative(self, s):
        """``integral from lo to s``, vectorized over ``s``."""
        out = self._anti(self._clip(s))
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, a, b):
        if np.any(np.asarray(a) > np.asarray(b)):
            raise ValueError("integral requires a <= b")
        return self.antiderivative(b) - self.antiderivative(a)

    def total(self):
        return float(self._anti(np.float64(self.hi)))

    def lp_norm(self, q):
        if q == np.inf:
            return self.sup()
        if q < 1:
            raise ValueError("q must be >= 1")
        top = self.sup()
        if top == 0:
            return 0.0
        if not 1e-100 < top < 1e100:
            # rescale so that |f|^q neither underflows nor overflows
            return top * self.scaled(1.0 / top).lp_norm(q)
        return float(self._power_integral(float(q)) ** (1.0 / q))

    def sup(self):
        return float(np.max(np.abs(self._piece_values())))

    def min_value(self):
        return float(np.min(self._piece_values()))

    def value_at_lo(self):
        return float(self._eval(np.float64(self.lo)))

    def value_at_hi(self):
        return float(self._eval(np.float64(self.hi)))

    def right_derivative_at_lo(self):
        raise UnsupportedKind(f"{self.kind} profiles have no one-sided derivative")

    def resample(self, n):
        return Samples(self.eval(np.linspace(self.lo, self.hi, n)), self.lo, self.hi)

    def scaled(self, c):
        return self.combine(self, 0.0, outer=c)

    def combine(self, other, scale, outer=1.0):
        """Profile equal to ``outer * (self + scale * other)``."""
        if (other.lo, other.hi) != (self.lo, self.hi):
            raise ValueError("profiles live on different intervals")
        kinds = {type(self), type(other)}
        if kinds <= {Constant}:
            return Constant(outer * (self.value + scale * other.value), self.lo, self.hi)
        if kinds <= {Constant, PiecewiseConstant}:
            bp = np.union1d(_breaks(self), _breaks(other))
            mids = 0.5 * (bp[1:] + bp[:-1])
            return PiecewiseConstant(bp, outer * (self._eval(mids) + scale * other._eval(mids)))
        if kinds <= {Constant, PiecewiseLinear}:
            nodes = np.union1d(_breaks(self), _breaks(other))
            return PiecewiseLinear(nodes, outer * (self._eval(nodes) + scale * other._eval(nodes)))
        grids = {len(p.nodes) for p in (self, other) if isinstance(p, Samples)}
        if len(grids) == 1 and kinds <= {Samples, Constant}:
            n = grids.pop()
        else:
            n = max(_grid_size(self), _grid_size(other), 4097)
        s = np.linspace(self.lo, self.hi, n)
        return Samples(outer * (self._eval(s) + scale * other._eval(s)), self.lo, self.hi)


def _breaks(p):
    if isinstance(p, PiecewiseConstant):
        return p.breakpoints
    if isinstance(p, PiecewiseLinear):
        return p.nodes
    return np.array([p.lo, p.hi])


def _grid_size(p):
    return len(p.nodes) if isinstance(p, PiecewiseLinear) else 2


class Constant(Profile):
    kind = "Constant"

    def __init__(self, value, lo=0.0, hi=1.0, nonneg=False):
        super().__init__(lo, hi, nonneg)
        self.value = float(value)
        self._check_nonneg(self.value)

    def _eval(self, s):
        return np.full(np.shape(s), self.value) if np.ndim(s) else np.float64(self.value)

    def _anti(self, s):
        return self.value * (s - self.lo)

    def _piece_values(self):
        return np.array([self.value])

    def _power_integral(self, q):
        return abs(self.value) ** q * self.length

    def right_derivative_at_lo(self):
        return 0.0

    def __repr__(self):
        return f"Constant({self.value}, [{self.lo}, {self.hi}])"


class PiecewiseConstant(Profile):
    """Right-continuous step function; at ``hi`` the left limit is used."""

    kind = "PiecewiseConstant"

    def __init__(self, breakpoints, values, nonneg=False):
        bp = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if bp.ndim != 1 or len(bp) < 2 or len(v) != len(bp) - 1:
            raise ValueError("need n+1 breakpoints for n values")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        super().__init__(bp[0], bp[-1], nonneg)
        self._check_nonneg(v)
        self.breakpoints, self.values = bp, v
        self._cum = np.concatenate([[0.0], np.cumsum(v * np.diff(bp))])

    def _index(self, s):
        return np.clip(np.searchsorted(self.breakpoints, s, side="right") - 1, 0, len(self.values) - 1)

    def _eval(self, s):
        return self.values[self._index(s)]

    def _anti(self, s):
        i = self._index(s)
        return self._cum[i] + self.values[i] * (s - self.breakpoints[i])

    def _piece_values(self):
        return self.values

    def _power_integral(self, q):
        return float(np.sum(np.abs(self.values) ** q * np.diff(self.breakpoints)))

    def right_derivative_at_lo(self):
        return 0.0


class PiecewiseLinear(Profile):
    kind = "PiecewiseLinear"

    def __init__(self, nodes, values, nonneg=False):
        x = np.asarray(nodes, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or len(x) < 2 or len(v) != len(x):
            raise ValueError("nodes and values must have equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be strictly increasing")
        super().__init__(x[0], x[-1], nonneg)
        self._check_nonneg(v)
        self.nodes, self.values = x, v
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])

    def _index(self, s):
        return np.clip(np.searchsorted(self.nodes, s, side="right") - 1, 0, len(self.nodes) - 2)

    def _eval(self, s):
        return np.interp(s, self.nodes, self.values)

    def _anti(self, s):
        i = self._index(s)
        x0, v0 = self.nodes[i], self.values[i]
        vs = self._eval(s)
        return self._cum[i] + 0.5 * (v0 + vs) * (s - x0)

    def _piece_values(self):
        return self.values

    def _power_integral(self, q):
        return float(np.sum(_linear_power_integrals(self.nodes, self.values, q)))

    def right_derivative_at_lo(self):
        return float((self.values[1] - self.values[0]) / (self.nodes[1] - self.nodes[0]))


class Samples(PiecewiseLinear):
    """Values on a uniform grid over ``[lo, hi]``, linearly interpolated."""

    kind = "Samples"

    def __init__(self, values, lo=0.0, hi=1.0, nonneg=False):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("Samples needs at least two values")
        super().__init__(np.linspace(lo, hi, len(v)), v, nonneg)
        self._h = (self.hi - self.lo) / (len(v) - 1)

    def _index(self, s):
        return np.clip(((s - self.lo) / self._h).astype(int), 0, len(self.values) - 2)

    def _eval(self, s):
        i = self._index(s)
        w = (s - self.nodes[i]) / self._h
        return self.values[i] + w * (self.values[i + 1] - self.values[i])

    def right_derivative_at_lo(self):
        raise UnsupportedKind("Samples profiles have no one-sided derivative")

    @classmethod
    def from_csv(cls, path, lo=0.0, hi=1.0, nonneg=False):
        """Equally spaced samples from the last column of a CSV (header optional).

        Snapshot files written by the CLI (``x,rho``) load directly.
        """
        vals = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or not row[-1].strip():
                    continue
                try:
                    vals.append(float(row[-1]))
                except ValueError:
                    if vals:
                        raise
                    # header row
        return cls(vals, lo, hi, nonneg)


def _linear_power_integrals(x, v, q):
    """Exact ``integral |f|^q`` on each segment of a piecewise linear ``f``."""
    x0, x1 = x[:-1], x[1:]
    v0, v1 = v[:-1], v[1:]
    out = np.zeros(len(x0))
    cross = (v0 * v1) < 0
    same = ~cross
    if np.any(same):
        a, b, L = np.abs(v0[same]), np.abs(v1[same]), (x1 - x0)[same]
        out[same] = L * _mean_power(a, b, q)
    if np.any(cross):
        a, b, L = np.abs(v0[cross]), np.abs(v1[cross]), (x1 - x0)[cross]
        # root splits the segment in proportion a : b
        out[cross] = L * (a ** (q + 1) + b ** (q + 1)) / ((q + 1) * (a + b))
    return out


def _mean_power(a, b, q):
    """Mean of ``t**q`` for ``t`` uniform between ``a`` and ``b`` (both >= 0)."""
    d = b - a
    res = np.empty_like(a)
    small = np.abs(d) <= 1e-12 * np.maximum(np.maximum(a, b), 1e-300)
    res[small] = ((a[small] + b[small]) / 2) ** q
    ds = ~small
    res[ds] = (b[ds] ** (q + 1) - a[ds] ** (q + 1)) / ((q + 1) * d[ds])
    return res


# -- stacks: one profile per batch member, evaluated with a member index ----

class SingleStack:
    """The same profile for every member."""

    def __init__(self, profile):
        self.profile = profile

    def eval(self, s, member=None):
        return self.profile._eval(self.profile._clip(s))

    def anti(self, s, member=None):
        return self.profile._anti(self.profile._clip(s))


class StepStack:
    """Piecewise-constant profiles with shared breakpoints; ``values`` is ``(B, n)``."""

    def __init__(self, breakpoints, values):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        widths = np.diff(self.breakpoints)
        self._cum = np.concatenate(
            [np.zeros((len(self.values), 1)), np.cumsum(self.values * widths, axis=1)], axis=1
        )
        self.lo, self.hi = self.breakpoints[0], self.breakpoints[-1]

    def member(self, b):
        return PiecewiseConstant(self.breakpoints, self.values[b])

    def _idx(self, s):
        return np.clip(np.searchsorted(self.breakpoints, s, side="right") - 1, 0, self.values.shape[1] - 1)

    def eval(self, s, member=None):
        s = np.clip(s, self.lo, self.hi)
        i = self._idx(s)
        m = 0 if member is None else member
        return self.values[m, i]

    def anti(self, s, member=None):
        s = np.clip(s, self.lo, self.hi)
        i = self._idx(s)
        m = 0 if member is None else member
        return self._cum[m, i] + self.values[m, i] * (s - self.breakpoints[i])


class GridStack:
    """Uniform-grid linear interpolants over ``[lo, hi]``; ``values`` is ``(B, n)``."""

    def __init__(self, values, lo=0.0, hi=1.0):
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        self.lo, self.hi = float(lo), float(hi)
        self.n = self.values.shape[1] - 1
        self.h = (self.hi - self.lo) / self.n
        self._cum = np.concatenate(
            [np.zeros((len(self.values), 1)),
             np.cumsum(0.5 * (self.values[:, 1:] + self.values[:, :-1]) * self.h, axis=1)],
            axis=1,
        )

    def member(self, b):
        return Samples(self.values[b], self.lo, self.hi)

    def _locate(self, s):
        r = (np.clip(s, self.lo, self.hi) - self.lo) / self.h
        i = np.clip(np.asarray(r).astype(int), 0, self.n - 1)
        return i, r - i

    def eval(self, s, member=None):
        i, w = self._locate(s)
        m = 0 if member is None else member
        v0 = self.values[m, i]
        return v0 + w * (self.values[m, i + 1] - v0)

    def anti(self, s, member=None):
        i, w = self._locate(s)
        m = 0 if member is None else member
        v0 = self.values[m, i]
        vs = v0 + w * (self.values[m, i + 1] - v0)
        return self._cum[m, i] + 0.5 * (v0 + vs) * w * self.h


class SnapshotStack(GridStack):
    """Density snapshots that also carry the cumulative mass at the nodes.

    ``eval`` interpolates the density linearly.  ``anti`` interpolates the
    cumulative mass ``cum`` by cubic Hermite pieces whose slopes are the
    density limited to three times the cell secant, which keeps the
    interpolant monotone and exact at the nodes even across density jumps.

    ``kink`` optionally gives, per member, one position where the density may
    jump (``nan`` for none) and ``kink_cum`` the exact cumulative mass there.
    The cell containing it is split in two; each side uses the density
    extrapolated from its own neighbours.
    """

    def __init__(self, values, cum, lo=0.0, hi=1.0, kink=None, kink_cum=None):
        super().__init__(values, lo, hi)
        self._cum = np.atleast_2d(np.asarray(cum, dtype=float))
        sec = np.diff(self._cum, axis=1) / self.h
        sec = np.maximum(sec, 0.0)
        v = np.maximum(self.values, 0.0)
        self._m0 = np.minimum(v[:, :-1], 3.0 * sec)
        self._m1 = np.minimum(v[:, 1:], 3.0 * sec)
        B = len(self.values)
        self.kink = np.full(B, np.nan) if kink is None else np.asarray(kink, dtype=float)
        self.kink_cum = np.zeros(B) if kink_cum is None else np.asarray(kink_cum, dtype=float)
        inside = np.isfinite(self.kink) & (self.kink > self.lo) & (self.kink < self.hi)
        self._kcell = np.full(B, -1)
        kc, _ = self._locate(self.kink[inside])
        self._kcell[inside] = kc
        # one-sided density limits at the kink, linear from the two nodes on each side
        self._kleft = np.zeros(B)
        self._kright = np.zeros(B)
        for b in np.flatnonzero(inside):
            i, xk = self._kcell[b], self.kink[b]
            row, x_i = self.values[b], self.lo + self._kcell[b] * self.h
            left = row[i] if i == 0 else row[i] + (xk - x_i) * (row[i] - row[i - 1]) / self.h
            x_r = x_i + self.h
            right = row[i + 1] if i + 2 > self.n else row[i + 1] - (x_r - xk) * (row[i + 2] - row[i + 1]) / self.h
            self._kleft[b], self._kright[b] = max(left, 0.0), max(right, 0.0)

    def _kink_hits(self, i, m):
        kc = self._kcell[m] if np.ndim(m) else np.full(np.shape(i), self._kcell[m])
        return kc == i

    def eval(self, s, member=None):
        out = super().eval(s, member)
        m = 0 if member is None else member
        i, w = self._locate(s)
        hit = self._kink_hits(i, m)
        if not np.any(hit):
            return out
        out = np.array(out, dtype=float)
        mh = m[hit] if np.ndim(m) else m
        sh = np.asarray(s, dtype=float)[hit]
        ih = i[hit]
        xk = self.kink[mh]
        x_i = self.lo + ih * self.h
        left = sh < xk
        vl = self.values[mh, ih] + (sh - x_i) / np.maximum(xk - x_i, 1e-300) * (self._kleft[mh] - self.values[mh, ih])
        x_r = x_i + self.h
        vr = self.values[mh, ih + 1] + (x_r - sh) / np.maximum(x_r - xk, 1e-300) * (self._kright[mh] - self.values[mh, ih + 1])
        out[hit] = np.where(left, vl, vr)
        return out

    @staticmethod
    def _hermite(c0, c1, m0, m1, L, w):
        sec = np.maximum((c1 - c0) / np.maximum(L, 1e-300), 0.0)
        m0 = np.minimum(m0, 3.0 * sec) * L
        m1 = np.minimum(m1, 3.0 * sec) * L
        w2, w3 = w * w, w * w * w
        return (c0 * (2 * w3 - 3 * w2 + 1) + m0 * (w3 - 2 * w2 + w)
                + c1 * (-2 * w3 + 3 * w2) + m1 * (w3 - w2))

    def anti(self, s, member=None):
        i, w = self._locate(s)
        m = 0 if member is None else member
        c0, c1 = self._cum[m, i], self._cum[m, i + 1]
        m0, m1 = self._m0[m, i] * self.h, self._m1[m, i] * self.h
        w2, w3 = w * w, w * w * w
        out = (c0 * (2 * w3 - 3 * w2 + 1) + m0 * (w3 - 2 * w2 + w)
               + c1 * (-2 * w3 + 3 * w2) + m1 * (w3 - w2))
        hit = self._kink_hits(i, m)
        if not np.any(hit):
            return out
        out = np.array(out, dtype=float)
        mh = m[hit] if np.ndim(m) else m
        sh = np.clip(np.asarray(s, dtype=float)[hit], self.lo, self.hi)
        ih = i[hit]
        xk, ck = self.kink[mh], self.kink_cum[mh]
        x_i = self.lo + ih * self.h
        x_r = x_i + self.h
        v = np.maximum(self.values, 0.0)
        L1, L2 = xk - x_i, x_r - xk
        a = self._hermite(self._cum[mh, ih], ck, v[mh, ih], self._kleft[mh], L1,
                          np.clip((sh - x_i) / np.maximum(L1, 1e-300), 0.0, 1.0))
        b = self._hermite(ck, self._cum[mh, ih + 1], self._kright[mh], v[mh, ih + 1], L2,
                          np.clip((sh - xk) / np.maximum(L2, 1e-300), 0.0, 1.0))
        out[hit] = np.where(sh < xk, a, b)
        return out


def as_stack(data):
    """Wrap a profile as a stack; anything else is assumed to be a stack already."""
    if isinstance(data, Profile):
        return SingleStack(data)
    return data
