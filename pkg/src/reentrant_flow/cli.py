"""Command-line front end.

    reentrant-flow simulate  --config scn.json --out-dir out/
    reentrant-flow oracle    --config scn.json --out-dir out/
    reentrant-flow stability --config scn.json --out-dir out/
    reentrant-flow control   --config scn.json --out-dir out/ --seed 3
    reentrant-flow validate  --config scn.json

Exit codes: 0 success, 1 a validation check failed, 2 configuration error,
3 Picard iteration did not converge.
"""

import argparse
import ast
import json
import math
import os
import sys

import numpy as np

from . import control_opt, invariants, stability_lab, upwind_oracle
from .errors import ConfigError, DerivativeMismatch, FlowError, NoConvergence, NonPositiveVelocity
from .mass_fixed_point import Numerics, write_slab_log
from .profiles import Constant, PiecewiseConstant, PiecewiseLinear, Samples
from .solver import Scenario, solve, write_series
from .velocity import Custom, ReciprocalMass, Separable

TOP_KEYS = {"velocity", "rho0", "influx", "T", "numerics", "demand", "control",
            "snapshot_times", "stability", "oracle"}


# -- restricted expressions for Custom velocities -----------------------------

_FUNCS = {name: getattr(np, name) for name in
          ("exp", "log", "sqrt", "sin", "cos", "tan", "tanh", "cosh", "sinh", "arctan", "abs")}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load, ast.Call,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def compile_expression(text, path):
    """Vectorized function of ``(x, W)`` from an arithmetic expression string."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(path, f"cannot parse expression: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(path, f"disallowed syntax {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in ("x", "W", "pi"):
            raise ConfigError(path, f"unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(path, "only elementary functions may be called")
    code = compile(tree, path, "eval")
    env = {"__builtins__": {}, "pi": math.pi, **_FUNCS}

    def f(x, W):
        x, W = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(W, dtype=float))
        return np.asarray(eval(code, env, {"x": x, "W": W}), dtype=float) * np.ones_like(x)

    return f


# -- config parsing ------------------------------------------------------------

def _require(d, key, path):
    if key not in d:
        raise ConfigError(f"{path}.{key}" if path else key, "missing")
    return d[key]


def _strict(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown key")


def _number(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, "expected a number")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be nonnegative")
    return v


def _numbers(v, path, nonneg=False):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list of numbers")
    return [_number(x, f"{path}[{i}]", nonneg=nonneg) for i, x in enumerate(v)]


def parse_profile(d, path, lo, hi, nonneg, base_dir="."):
    _strict(d, {"kind", "data"}, path)
    kind = _require(d, "kind", path)
    data = _require(d, "data", path)
    dp = f"{path}.data"
    try:
        if kind == "Constant":
            return Constant(_number(data, dp, nonneg=nonneg), lo, hi, nonneg)
        if kind == "PiecewiseConstant":
            _strict(data, {"breakpoints", "values"}, dp)
            bp = _numbers(_require(data, "breakpoints", dp), f"{dp}.breakpoints")
            vals = _numbers(_require(data, "values", dp), f"{dp}.values", nonneg=nonneg)
            if bp[0] != lo or bp[-1] != hi:
                raise ConfigError(f"{dp}.breakpoints", f"must span [{lo}, {hi}]")
            return PiecewiseConstant(bp, vals, nonneg)
        if kind == "PiecewiseLinear":
            _strict(data, {"nodes", "values"}, dp)
            nodes = _numbers(_require(data, "nodes", dp), f"{dp}.nodes")
            vals = _numbers(_require(data, "values", dp), f"{dp}.values", nonneg=nonneg)
            if nodes[0] != lo or nodes[-1] != hi:
                raise ConfigError(f"{dp}.nodes", f"must span [{lo}, {hi}]")
            return PiecewiseLinear(nodes, vals, nonneg)
        if kind == "Samples":
            _strict(data, {"values", "csv"}, dp)
            if "csv" in data:
                p = os.path.join(base_dir, str(data["csv"]))
                prof = Samples.from_csv(p, lo, hi, False)
                if nonneg and prof.min_value() < 0:
                    raise ConfigError(f"{dp}.csv", "negative value")
                prof.nonneg = nonneg
                return prof
            vals = _numbers(_require(data, "values", dp), f"{dp}.values", nonneg=nonneg)
            return Samples(vals, lo, hi, nonneg)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(dp, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown profile kind {kind!r}")


def parse_velocity(d, path="velocity", check=True):
    _strict(d, {"kind", "params", "mass_cap"}, path)
    kind = _require(d, "kind", path)
    params = d.get("params", {}) or {}
    pp = f"{path}.params"
    cap = d.get("mass_cap")
    if cap is not None:
        cap = _number(cap, f"{path}.mass_cap", nonneg=True)
    try:
        if kind == "ReciprocalMass":
            _strict(params, set(), pp)
            return ReciprocalMass(mass_cap=cap)
        if kind == "Separable":
            _strict(params, {"a", "g_num", "g_den"}, pp)
            a = _numbers(_require(params, "a", pp), f"{pp}.a")
            g_num = _numbers(params.get("g_num", [1.0]), f"{pp}.g_num")
            g_den = _numbers(params.get("g_den", [1.0]), f"{pp}.g_den")
            return Separable(a, g_num, g_den, mass_cap=cap)
        if kind == "Custom":
            _strict(params, {"lam", "lam_x", "lam_w", "x_independent"}, pp)
            funcs = [compile_expression(_require(params, k, pp), f"{pp}.{k}")
                     for k in ("lam", "lam_x", "lam_w")]
            return Custom(*funcs, mass_cap=cap, check=check,
                          x_independent=bool(params.get("x_independent", False)))
    except DerivativeMismatch as exc:
        raise ConfigError(pp, str(exc)) from None
    except NonPositiveVelocity as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown velocity kind {kind!r}")


def parse_numerics(d, T, path="numerics"):
    _strict(d, {"h_char", "h_W", "nx_snapshot", "tol", "cfl"}, path)
    kw = {}
    for key in ("h_char", "h_W", "tol", "cfl"):
        if key in d and d[key] is not None:
            kw[key] = _number(d[key], f"{path}.{key}", positive=True)
    if "nx_snapshot" in d:
        n = d["nx_snapshot"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 2:
            raise ConfigError(f"{path}.nx_snapshot", "expected an integer >= 2")
        kw["nx_snapshot"] = n
    if "cfl" in kw and not kw["cfl"] < 1:
        raise ConfigError(f"{path}.cfl", "must lie in (0, 1)")
    return Numerics(**kw)


class Config:
    """Parsed scenario document."""

    def __init__(self, doc, base_dir=".", check_derivatives=True):
        _strict(doc, TOP_KEYS, "")
        self.doc = doc
        self.T = _number(_require(doc, "T", ""), "T", positive=True)
        self.model = parse_velocity(_require(doc, "velocity", ""), check=check_derivatives)
        self.rho0 = parse_profile(_require(doc, "rho0", ""), "rho0", 0.0, 1.0, True, base_dir)
        self.u = parse_profile(_require(doc, "influx", ""), "influx", 0.0, self.T, True, base_dir)
        self.numerics = parse_numerics(doc.get("numerics", {}) or {}, self.T)
        self.base_dir = base_dir
        self.demand = None
        self.demand_control = None
        if "demand" in doc:
            d = doc["demand"]
            if isinstance(d, dict) and d.get("kind") == "FromControl":
                _strict(d, {"kind", "data"}, "demand")
                data = _require(d, "data", "demand")
                _strict(data, {"params"}, "demand.data")
                self.demand_control = _numbers(_require(data, "params", "demand.data"),
                                               "demand.data.params", nonneg=True)
            else:
                self.demand = parse_profile(d, "demand", 0.0, self.T, False, base_dir)
        self.control = None
        if "control" in doc:
            c = doc["control"]
            _strict(c, {"p", "n_pieces", "u_max", "budget", "seed"}, "control")
            n = c.get("n_pieces", 1)
            if isinstance(n, bool) or not isinstance(n, int) or n < 1:
                raise ConfigError("control.n_pieces", "expected an integer >= 1")
            budget = c.get("budget", 50 * n)
            if isinstance(budget, bool) or not isinstance(budget, int) or budget < 50 * n:
                raise ConfigError("control.budget", "expected an integer >= 50 * n_pieces")
            seed = c.get("seed", 0)
            if isinstance(seed, bool) or not isinstance(seed, int):
                raise ConfigError("control.seed", "expected an integer")
            p = _number(c.get("p", 2.0), "control.p")
            if p < 1:
                raise ConfigError("control.p", "must be >= 1")
            self.control = dict(p=p, n_pieces=n,
                                u_max=_number(_require(c, "u_max", "control"), "control.u_max", positive=True),
                                budget=budget, seed=seed)
        self.snapshot_times = [
            _number(v, f"snapshot_times[{i}]", nonneg=True)
            for i, v in enumerate(doc.get("snapshot_times", []) or [])
        ]
        for i, v in enumerate(self.snapshot_times):
            if v > self.T:
                raise ConfigError(f"snapshot_times[{i}]", "beyond the horizon T")
        self.stability = doc.get("stability")
        self.oracle = doc.get("oracle", {}) or {}
        _strict(self.oracle, {"nx"}, "oracle")
        try:
            self.scenario = Scenario(self.model, self.rho0, self.u, self.T, self.numerics)
        except FlowError as exc:
            raise ConfigError("velocity.mass_cap", str(exc)) from None

    def stability_sweeps(self):
        s = self.stability
        if s is None:
            raise ConfigError("stability", "missing")
        _strict(s, {"d_rho0", "d_u", "amplitudes", "p"}, "stability")
        d_rho0 = parse_profile(_require(s, "d_rho0", "stability"), "stability.d_rho0", 0.0, 1.0, False, self.base_dir)
        d_u = parse_profile(_require(s, "d_u", "stability"), "stability.d_u", 0.0, self.T, False, self.base_dir)
        amps = _numbers(_require(s, "amplitudes", "stability"), "stability.amplitudes", nonneg=True)
        ps = s.get("p", [1.0])
        ps = _numbers(ps if isinstance(ps, list) else [ps], "stability.p")
        try:
            first = stability_lab.PerturbationSweep(self.scenario, d_rho0, d_u, amps, ps[0])
        except ValueError as exc:
            raise ConfigError("stability", str(exc)) from None
        return [first] + [first.with_p(p) for p in ps[1:]]


def load_config(path, check_derivatives=True):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return Config(doc, os.path.dirname(os.path.abspath(path)), check_derivatives)


# -- subcommands ------------------------------------------------------------------

def _say(args, msg):
    if not args.quiet:
        print(msg)


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_simulate(cfg, args):
    sol = solve(cfg.scenario)
    write_series(_out(args, "W.csv"), ["t", "W"], sol.mass.grid, sol.mass.values)
    t, y = sol.outflux_series()
    write_series(_out(args, "outflux.csv"), ["t", "y"], t, y)
    if cfg.demand is not None:
        write_series(_out(args, "backlog.csv"), ["t", "backlog"], t, sol.backlog(cfg.demand, t))
    n = cfg.numerics.nx_snapshot
    for ts in cfg.snapshot_times:
        snap = sol.snapshot(ts, n)
        write_series(_out(args, f"snapshot_t{ts:.17g}.csv"), ["x", "rho"], snap.nodes, snap.values)
    write_slab_log(_out(args, "slab_log.csv"), sol.mass.slab_log)
    _say(args, f"solved {len(sol.mass.slab_log)} slabs; W(T) = {sol.mass.values[-1]:.12g}")
    return 0


def cmd_oracle(cfg, args):
    nx = int(cfg.oracle.get("nx", 400))
    if nx < 50:
        raise ConfigError("oracle.nx", "expected an integer >= 50")
    scn = cfg.scenario
    cells, t, W, y = upwind_oracle.run(scn.model, scn.rho0, scn.u, scn.T, nx, cfg.numerics.cfl)
    centers = (np.arange(nx) + 0.5) / nx
    write_series(_out(args, "oracle_final.csv"), ["x", "rho"], centers, cells)
    write_series(_out(args, "oracle_W.csv"), ["t", "W"], t, W)
    write_series(_out(args, "oracle_outflux.csv"), ["t", "y"], t, y)
    sol = solve(scn)
    dist = invariants.oracle_distance(sol, nx, cfg.numerics.cfl)
    _say(args, f"L1 distance at T between solver and upwind (nx={nx}): {dist:.6e}")
    return 0


def cmd_stability(cfg, args):
    for sweep in cfg.stability_sweeps():
        tag = f"p{sweep.p:g}"
        for label, fn in (("solution", stability_lab.solution_stability),
                          ("outflux", stability_lab.outflux_stability)):
            rows = fn(sweep)
            stability_lab.write_rows(_out(args, f"stability_{label}_{tag}.csv"), rows)
            fit = stability_lab.fit_power(rows)
            _say(args, f"{label} {tag}: distances {[f'{d:.3e}' for _, d in rows]}, "
                       f"fitted exponent {fit.exponent:.3f} (empirical rate, no rate is guaranteed)")
    return 0


def cmd_control(cfg, args):
    if cfg.control is None:
        raise ConfigError("control", "missing")
    c = cfg.control
    seed = c["seed"] if args.seed is None else args.seed
    if cfg.demand_control is not None:
        y_d = control_opt.demand_from_control(cfg.model, cfg.rho0, cfg.T, cfg.demand_control,
                                              c["u_max"])
    elif cfg.demand is not None:
        y_d = cfg.demand
    else:
        raise ConfigError("demand", "missing (required by control)")
    prob = control_opt.ControlProblem(cfg.model, cfg.rho0, cfg.T, y_d, c["p"], c["n_pieces"], c["u_max"])
    res = control_opt.optimize(prob, c["budget"], seed)
    control_opt.write_trace(_out(args, "control_trace.csv"), res.trace)
    write_series(_out(args, "control_best.csv"), ["piece", "u"],
                 np.arange(len(res.u_best)), res.u_best)
    _say(args, f"J_best = {res.J_best:.12g} after {res.evaluations} evaluations"
               f"{' (budget exhausted)' if res.exhausted else ''}; "
               f"u_best = {np.array2string(res.u_best, precision=6)} (local minimizer of the discretized problem)")
    if cfg.demand_control is not None:
        J_star = float(prob.cost_batch(np.array(cfg.demand_control)[None, :])[0]) \
            if len(cfg.demand_control) == c["n_pieces"] else float("nan")
        _say(args, f"J(u*) = {J_star:.12g}")
    return 0


def cmd_validate(cfg, args):
    sol = solve(cfg.scenario)
    checks = invariants.run_all(sol)
    for c in checks:
        _say(args, c.line())
    ok = invariants.all_passed(checks)
    _say(args, "ALL PASS" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "stability": cmd_stability,
    "control": cmd_control,
    "validate": cmd_validate,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="reentrant-flow", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out-dir", default=".", metavar="PATH")
        p.add_argument("--quiet", action="store_true")
        if name == "control":
            p.add_argument("--seed", type=int, default=None, metavar="N")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not hasattr(args, "seed"):
        args.seed = None
    try:
        cfg = load_config(args.config, check_derivatives=args.command != "validate")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
