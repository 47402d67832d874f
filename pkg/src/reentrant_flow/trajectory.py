"""Total-mass trajectories W(t) on a uniform time grid."""

import numpy as np


class MassTrajectory:
    """Samples of W on a uniform grid over ``[0, T]`` with linear interpolation.

    ``lipschitz_bound`` and ``slab_log`` are filled in by
    :func:`reentrant_flow.mass_fixed_point.solve_mass`; trajectories built by
    hand for tracing experiments leave them empty.
    """

    def __init__(self, values, T, lipschitz_bound=None, slab_log=None):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("need at least two mass samples")
        self.values = v
        self.T = float(T)
        self.h = self.T / (len(v) - 1)
        self.lipschitz_bound = lipschitz_bound
        self.slab_log = list(slab_log or [])

    @classmethod
    def constant(cls, value, T, n=1024):
        return cls(np.full(n + 1, float(value)), T)

    @classmethod
    def from_function(cls, f, T, n=1024):
        t = np.linspace(0.0, T, n + 1)
        return cls(np.asarray(f(t), dtype=float) * np.ones_like(t), T)

    @property
    def grid(self):
        return np.linspace(0.0, self.T, len(self.values))

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)

    def field(self, model):
        return Field(model, self.values[None, :], self.h)

    def max_difference_quotient(self):
        return float(np.max(np.abs(np.diff(self.values))) / self.h)


class Field:
    """Velocity model coupled to one or more mass trajectories sharing a grid.

    ``wv`` has shape ``(B, N+1)``; member ``b`` is the trajectory ``wv[b]``.
    Grid time ``k`` is ``t_origin + k * h``.
    """

    def __init__(self, model, wv, h, t_origin=0.0):
        self.model = model
        self.wv = wv
        self.h = float(h)
        self.t_origin = float(t_origin)
        self.n = wv.shape[1] - 1
        self.batch = wv.shape[0]

    def col(self, s):
        """W of every member at the scalar time ``s``: a float when ``batch == 1``."""
        r = (s - self.t_origin) / self.h
        i = min(max(int(r), 0), self.n - 1)
        w = min(max(r - i, 0.0), 1.0)
        if self.batch == 1:
            row = self.wv[0]
            return self.model.clamp_mass(row[i] + w * (row[i + 1] - row[i]))
        v = self.wv[:, i] + w * (self.wv[:, i + 1] - self.wv[:, i])
        return self.model.clamp_mass(v)

    def at(self, s, member=None):
        """W at per-element times ``s`` for members ``member``."""
        r = (np.asarray(s, dtype=float) - self.t_origin) / self.h
        i = np.clip(r.astype(int), 0, self.n - 1)
        w = np.clip(r - i, 0.0, 1.0)
        if member is None:
            row = self.wv[0]
            v = row[i] + w * (row[i + 1] - row[i])
        else:
            v = self.wv[member, i] + w * (self.wv[member, i + 1] - self.wv[member, i])
        return self.model.clamp_mass(v)

    def at_scalar_time(self, s, member=None):
        c = self.col(s)
        if member is None or self.batch == 1:
            return c
        return c[member]
