"""Mass-coupled transport on [0, 1]: rho_t + (rho * lambda(x, W(t)))_x = 0.

The total mass W(t) is found slab by slab as the fixed point of a mass map
built on backward characteristics; the density then follows by transport.
"""

from .errors import (
    CFLViolation,
    ConfigError,
    DerivativeMismatch,
    FlowError,
    IntegratorStall,
    MassCapExceeded,
    NoConvergence,
    NonPositiveVelocity,
    OutOfDomain,
    UnsupportedKind,
)
from .velocity import Custom, ReciprocalMass, Separable, VelocityBounds, VelocityModel
from .profiles import Constant, PiecewiseConstant, PiecewiseLinear, Samples
from .mass_fixed_point import Numerics, SlabRecord, picard_slab, solve_mass
from .solver import Scenario, Solution, TestFunction, check_compatibility, polynomial_family, solve
from .control_opt import ControlProblem, evaluate_cost, grid_scan, optimize
from .stability_lab import PerturbationSweep, outflux_stability, solution_stability

__version__ = "0.1.0"
