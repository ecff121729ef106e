"""Command-line driver.

Exit status: 0 on success, 2 on usage errors (unknown flags, missing or
invalid parameters), 1 when a computation fails.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from contextlib import contextmanager

import numpy as np
from scipy import special

from . import analytic, heatbath, inference, io, lifetime, simulate
from .errors import ParameterError, SubdiffusionError
from .params import PhysicalParams, check_hurst
from .trace import CovarianceCurve, Trace

log = logging.getLogger("subdiffusion")

THREADS_ENV = "SUBDIFFUSION_THREADS"

# parameters of the synthetic figure recipes: (h, zeta/(m psi), beta^2 kbt/(m psi))
FIG_PARAMS = (0.74, 0.40, 0.81)
# fit window of the fig2 recipe in units of tau; shorter windows leave h poorly identified
FIT_WINDOW_TAU = 25


class UsageError(Exception):
    pass


_SUBPARSERS: dict = {}


def thread_count() -> int:
    """Worker threads from the environment (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be at least 1")
    return n


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _add_physical(p: argparse.ArgumentParser, psi: bool = True):
    g = p.add_argument_group("physical parameters")
    g.add_argument("--m", type=float, default=1.0, help="particle mass (default 1)")
    g.add_argument("--zeta", type=float, default=1.0, help="friction coefficient (default 1)")
    g.add_argument("--kbt", type=float, default=1.0, help="thermal energy (default 1)")
    if psi:
        g.add_argument("--psi", type=float, default=None, help="harmonic strength; omit for a free particle")


def _add_out(p: argparse.ArgumentParser):
    p.add_argument("--out", "-o", default="-", help="output CSV path ('-' for stdout)")


def _params(args, need_psi: bool | None = None) -> PhysicalParams:
    try:
        p = PhysicalParams(args.m, args.zeta, args.kbt, getattr(args, "psi", None))
        if need_psi is True:
            p.require_potential()
        elif need_psi is False:
            p.require_free()
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    return p


def _hurst(h) -> float:
    try:
        return check_hurst(h)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def _grid(spec: str) -> np.ndarray:
    """'start:stop:num' (linear), 'log:start:stop:num' or comma list."""
    try:
        if spec.startswith("log:"):
            a, b, n = spec[4:].split(":")
            return np.geomspace(float(a), float(b), int(n))
        if ":" in spec:
            a, b, n = spec.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse grid {spec!r}; use start:stop:num, log:start:stop:num or a list") from None


@contextmanager
def _sink(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit_table(path, columns, meta=None, digits=io.TABLE_DIGITS):
    with _sink(path) as fh:
        io.write_table(fh, columns, meta, digits)


def _note(msg: str):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    h = _hurst(args.h)
    regime = args.regime
    p = _params(args, need_psi=regime != "free")
    try:
        req = simulate.SimRequest(p, h, regime, args.n, args.dt, args.seed)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    if regime == "overdamped":
        tr = simulate.simulate_overdamped(req, args.path)
    elif regime == "free":
        tr = simulate.simulate_free_velocity(req, args.path)
        if args.quantity == "x":
            tr = simulate.displacement_from_velocity(tr)
    else:
        x, v = simulate.simulate_harmonic(req, args.path)
        tr = x if args.quantity == "x" else v
    with _sink(args.out) as fh:
        io.write_trace_csv(fh, tr)
    return 0


def cmd_analytic(args) -> int:
    h = _hurst(args.h)
    kind = args.curve
    need = None
    if kind in ("velocity", "msd", "velocity-spectrum"):
        need = False
    elif kind.startswith("harmonic") or kind.startswith("overdamped"):
        need = True
    p = _params(args, need)
    grid = _grid(args.grid)
    if kind.endswith("-spectrum"):
        curve = analytic.spectral_curve(p, h, kind.split("-")[0], grid)
    else:
        curve = analytic.covariance_curve(p, h, kind, grid, tol=args.tol)
    with _sink(args.out) as fh:
        io.write_curve_csv(fh, curve)
    return 0


def cmd_msd(args) -> int:
    h = _hurst(args.h)
    p = _params(args, need_psi=False)
    req = simulate.SimRequest(p, h, "free", args.n, args.dt, args.seed)
    v = simulate.simulate_ensemble(req, args.paths)
    x = simulate.displacement_paths(v, args.dt)
    if args.estimator == "ensemble":
        traces = [Trace(args.dt, row) for row in x]
        curve = simulate.ensemble_msd(traces)
        curve = CovarianceCurve(curve.lags[1:], curve.values[1:], "msd", curve.stderr[1:], curve.meta)
    else:
        lags = np.unique(np.geomspace(1, args.n - 1, 200).astype(int))
        curve = simulate.time_averaged_msd(x, args.dt, lags)
    t_min = args.fit_min if args.fit_min is not None else 10 * analytic.velocity_time_scale(p, h)
    t_max = args.fit_max if args.fit_max is not None else curve.lags[-1]
    est = inference.estimate_hurst_msd(curve, t_min, t_max)
    meta = {"h": h, "paths": args.paths, "seed": args.seed, "estimator": args.estimator,
            "slope": est.slope, "slope_stderr": 2 * est.stderr, "h_hat": est.h,
            "fit_t_min": est.t_min, "fit_t_max": est.t_max,
            "asymptote_prefactor": analytic.msd_prefactor(p, h)}
    _emit_table(args.out, {"lag": curve.lags, "mean": curve.values, "stderr": curve.stderr}, meta)
    _note(f"slope={est.slope:.6g} h_hat={est.h:.6g} +- {est.stderr:.2g}")
    return 0


def cmd_heatbath(args) -> int:
    h = _hurst(args.h)
    if args.psi is not None and args.psi < 0:
        raise UsageError("psi must be nonnegative")
    try:
        cfg = heatbath.build_bath(h, args.n_osc, args.omega_min, args.omega_max, args.m_b, args.kbt,
                                  zeta=args.zeta, spacing=args.spacing)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    step = args.step if args.step is not None else heatbath.STEP_FACTOR / cfg.omega_max
    state = heatbath.sample_initial_conditions(cfg, args.x0, args.seed)
    tr = heatbath.integrate(cfg, state, args.m, args.t_max, step, psi=args.psi or 0.0, stride=args.stride)
    with _sink(args.out) as fh:
        io.write_table(fh, {"time": tr.times, "x": tr.values}, {**tr.meta, "seed": args.seed}, io.TRACE_DIGITS)
    if args.report:
        rep = heatbath.verify_fluctuation_dissipation(cfg, args.members, args.seed)
        meta = {**cfg.meta(), "members": args.members, "valid_window_lo": rep.valid_window[0],
                "valid_window_hi": rep.valid_window[1], "max_abs_z": rep.max_abs_z}
        cols = rep.columns()
        _emit_table(args.report, {k: cols[k] for k in ("lag", "empirical", "theoretical", "relerr")}, meta)
        _note(f"kernel valid for t in [{rep.valid_window[0]:.4g}, {rep.valid_window[1]:.4g}]; "
              f"max |z| = {rep.max_abs_z:.3g}")
    return 0


def _overdamped_cov(args):
    p = _params(args, need_psi=True)
    h = _hurst(args.h)
    return lambda t: analytic.overdamped_autocovariance(p, h, t)


def cmd_lifetime(args) -> int:
    lp = lifetime.LifetimeParams(args.k0, args.beta, args.x_eq)
    if args.table == "trace":
        if not args.input:
            raise UsageError("--input is required for --table trace")
        x = io.read_trace_csv(args.input)
        with _sink(args.out) as fh:
            io.write_trace_csv(fh, lifetime.lifetime_map(x, lp))
        return 0
    cov = _overdamped_cov(args)
    t = _grid(args.grid)
    meta = {"k0": lp.k0, "beta": lp.beta, "x_eq": lp.x_eq, "h": args.h, "table": args.table}
    if args.table == "autocov":
        _emit_table(args.out, {"t": t, "value": [lifetime.lifetime_autocov(lp, cov, s) for s in t]}, meta)
    elif args.table == "three":
        _emit_table(args.out, {"t": t, "value": [lifetime.three_step_corr(lp, cov, s, s) for s in t]}, meta)
    elif args.table == "four":
        _emit_table(args.out, {"t": t, "value": [lifetime.four_step_corr(lp, cov, s, s, s) for s in t]}, meta)
    else:
        rows = lifetime.time_symmetry_pairs(lp, cov, t)
        _emit_table(args.out, {"t": rows[:, 0], "left": rows[:, 1], "right": rows[:, 2]}, meta)
    return 0


def _load_curve(args) -> CovarianceCurve:
    if args.trace:
        tr = io.read_trace_csv(args.trace)
        return inference.empirical_autocorrelation(tr, args.max_lag)
    if not args.input:
        raise UsageError("give --input (lag,value curve) or --trace")
    curve = io.read_curve_csv(args.input)
    if not isinstance(curve, CovarianceCurve):
        raise UsageError("input is not a lag curve")
    return curve


def cmd_fit(args) -> int:
    curve = _load_curve(args)
    res = inference.fit_overdamped_model(curve)
    for k, v in res.as_dict().items():
        print(f"{k}={v}")
    if args.curve_out:
        model = curve.values[0] * inference.normalized_lifetime_model(
            curve.lags, res.h_hat, res.ratio_hat, res.amp_hat)
        _emit_table(args.curve_out, {"lag": curve.lags, "empirical": curve.values, "fitted": model},
                    res.as_dict())
    return 0


def cmd_recover(args) -> int:
    p = _params(args, need_psi=True)
    curve = _load_curve(args)
    s = _grid(args.s_grid) if args.s_grid else None
    lap = inference.laplace_transform_curve(curve, s)
    ker = inference.recover_kernel(lap, p)
    with _sink(args.out) as fh:
        io.write_curve_csv(fh, ker, io.TABLE_DIGITS)
    return 0


def cmd_potential(args) -> int:
    tr = io.read_trace_csv(args.input)
    pot = inference.reconstruct_potential(tr, args.bins, args.kbt)
    k, se = inference.potential_curvature(pot)
    _emit_table(args.out, {"x": pot.x, "u": pot.u, "count": pot.counts},
                {**pot.meta, "curvature": k, "curvature_stderr": se, "bin_width": pot.width})
    _note(f"curvature={k:.6g} +- {se:.2g}")
    return 0


# ---------------------------------------------------------------------------
# figure recipes (synthetic data)
# ---------------------------------------------------------------------------

def _fig_model(h: float, ratio: float, amp: float):
    """Physical parameters realizing (h, zeta/(m psi), beta^2 kbt/(m psi))
    with m = psi = beta = 1."""
    return PhysicalParams(m=1.0, zeta=ratio, kbt=amp, psi=1.0), lifetime.LifetimeParams(1.0, 1.0, 0.0)


def _fig_trace(args, h, ratio, amp):
    p, lp = _fig_model(h, ratio, amp)
    tau = analytic.tau(p, h)
    dt = args.dt if args.dt is not None else tau / 5
    req = simulate.SimRequest(p, h, "overdamped", args.n, dt, args.seed)
    x = simulate.simulate_overdamped(req)
    return p, lp, x, tau


def figure(args) -> int:
    h = _hurst(args.h) if args.h is not None else FIG_PARAMS[0]
    ratio, amp = FIG_PARAMS[1], FIG_PARAMS[2]
    name = args.name
    p, lp, x, tau = _fig_trace(args, h, ratio, amp)
    dt = x.dt
    cov = lambda t: analytic.overdamped_autocovariance(p, h, t)
    meta = {"figure": name, "h": h, "ratio": ratio, "amp": amp, "seed": args.seed, "n": args.n, "dt": dt}
    if name == "fig2":
        lam = lifetime.lifetime_map(x, lp)
        curve = inference.empirical_autocorrelation(lam, int(round(FIT_WINDOW_TAU * tau / dt)))
        res = inference.fit_overdamped_model(curve)
        model = [lifetime.lifetime_autocov(lp, cov, t) for t in curve.lags]
        fitted = curve.values[0] * inference.normalized_lifetime_model(
            curve.lags, res.h_hat, res.ratio_hat, res.amp_hat)
        meta.update(res.as_dict())
        _emit_table(args.out, {"lag": curve.lags, "empirical": curve.values, "fitted": fitted, "model": model}, meta)
    elif name in ("fig3", "fig4"):
        lam = lifetime.lifetime_map(x, lp).values
        steps = np.unique(np.linspace(1, int(round(3 * tau / dt)), 12).astype(int))
        t = steps * dt
        if name == "fig3":
            cols = {"t": t,
                    "three_even_model": [lifetime.three_step_corr(lp, cov, s, s) for s in t],
                    "three_even_emp": [lifetime.empirical_multistep(lam, [0, k, 2 * k])[0] for k in steps],
                    "three_uneven_model": [lifetime.three_step_corr(lp, cov, 2 * s, s) for s in t],
                    "three_uneven_emp": [lifetime.empirical_multistep(lam, [0, 2 * k, 3 * k])[0] for k in steps],
                    "four_even_model": [lifetime.four_step_corr(lp, cov, s, s, s) for s in t],
                    "four_even_emp": [lifetime.empirical_multistep(lam, [0, k, 2 * k, 3 * k])[0] for k in steps]}
        else:
            pairs = lifetime.time_symmetry_pairs(lp, cov, t)
            cols = {"t": t, "left": pairs[:, 1], "right": pairs[:, 2],
                    "left_emp": [lifetime.empirical_multistep(lam, [0, k, 3 * k])[0] for k in steps],
                    "right_emp": [lifetime.empirical_multistep(lam, [0, 2 * k, 3 * k])[0] for k in steps]}
        _emit_table(args.out, cols, meta)
    elif name == "fig6b":
        pot = inference.reconstruct_potential(x, None, p.kbt)
        k, se = inference.potential_curvature(pot)
        meta.update(curvature=k, curvature_stderr=se, m_psi=p.m * p.psi)
        _emit_table(args.out, {"x": pot.x, "u": pot.u, "u_harmonic": 0.5 * p.m * p.psi * (pot.x - pot.meta["mean"]) ** 2}, meta)
    elif name in ("fig7a", "fig7b"):
        curve = inference.empirical_autocorrelation(x, min(len(x) // 10, int(round(2000 * tau / dt))))
        lap = inference.laplace_transform_curve(curve)
        s = lap.s
        if name == "fig7a":
            _emit_table(args.out, {"s": s, "empirical": lap.values, "theory": inference.overdamped_laplace(p, h, s)}, meta)
        else:
            ker = inference.recover_kernel(lap, p)
            # upper decade of the resolvable band, where the transform is least noisy
            hi = s[-1]
            lo = max(s[0], hi / 10)
            slope, se = inference.loglog_slope(ker, lo, hi)
            meta.update(slope=slope, slope_stderr=se, slope_lo=lo, slope_hi=hi, expected_slope=1 - 2 * h)
            theory = special.gamma(2 * h + 1) * s ** (1 - 2 * h)
            _emit_table(args.out, {"s": s, "kernel": ker.values, "theory": theory,
                                   "slope": np.full(s.size, slope)}, meta)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown figure {name!r}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subdiffusion", description="Fractional-noise GLE toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    _SUBPARSERS.clear()
    sub_add = sub.add_parser

    def add_parser(name, **kw):
        _SUBPARSERS[name] = sub_add(name, **kw)
        return _SUBPARSERS[name]

    sub.add_parser = add_parser

    p = sub.add_parser("simulate", help="simulate a stationary trace")
    p.add_argument("--regime", required=True, choices=simulate.REGIMES)
    p.add_argument("--h", type=float, required=True, help="Hurst exponent in (1/2, 1)")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--dt", type=float, required=True, help="time step")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--path", type=int, default=0, help="path index within the seeded ensemble")
    p.add_argument("--quantity", choices=("x", "v"), default=None,
                   help="free: v (default) or x; harmonic: x (default) or v")
    _add_physical(p)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analytic", help="tabulate an analytic curve")
    p.add_argument("--curve", required=True, choices=("velocity", "msd", "overdamped", "harmonic-xx", "harmonic-vv",
                                                      "harmonic-xv", "velocity-spectrum", "overdamped-spectrum"))
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--grid", required=True, help="start:stop:num, log:start:stop:num or a comma list")
    p.add_argument("--tol", type=float, default=analytic.DEFAULT_TOL)
    _add_physical(p)
    _add_out(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("msd", help="free-particle ensemble MSD and slope")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--paths", type=int, default=500)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--estimator", choices=("ensemble", "time-averaged"), default="ensemble")
    p.add_argument("--fit-min", type=float, default=None)
    p.add_argument("--fit-max", type=float, default=None)
    _add_physical(p, psi=False)
    _add_out(p)
    p.set_defaults(func=cmd_msd)

    p = sub.add_parser("heatbath", help="integrate the oscillator bath")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--n-osc", type=int, default=5000)
    p.add_argument("--omega-min", type=float, default=heatbath.DEFAULT_BAND[0])
    p.add_argument("--omega-max", type=float, default=heatbath.DEFAULT_BAND[1])
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--m-b", type=float, default=1.0, help="bath particle mass")
    p.add_argument("--m", type=float, default=0.01, help="particle mass")
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--kbt", type=float, default=1.0)
    p.add_argument("--psi", type=float, default=None)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--step", type=float, default=None, help="integration step (default 0.1/omega_max)")
    p.add_argument("--stride", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", default=None, help="write a fluctuation-dissipation report CSV here")
    p.add_argument("--members", type=int, default=1000)
    _add_out(p)
    p.set_defaults(func=cmd_heatbath)

    p = sub.add_parser("lifetime", help="lifetime traces and correlation tables")
    p.add_argument("--table", choices=("trace", "autocov", "three", "four", "symmetry"), default="trace")
    p.add_argument("--input", help="displacement trace CSV (for --table trace)")
    p.add_argument("--k0", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--x-eq", type=float, default=0.0)
    p.add_argument("--h", type=float, default=FIG_PARAMS[0])
    p.add_argument("--grid", default="log:0.01:10:30")
    _add_physical(p)
    _add_out(p)
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("fit", help="fit the overdamped lifetime model")
    p.add_argument("--input", help="lag,value autocorrelation CSV")
    p.add_argument("--trace", help="lifetime trace CSV (autocorrelation computed here)")
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--curve-out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("recover-kernel", help="Laplace-domain memory kernel recovery")
    p.add_argument("--input", help="lag,value displacement autocovariance CSV")
    p.add_argument("--trace", help="displacement trace CSV")
    p.add_argument("--max-lag", type=int, default=1000)
    p.add_argument("--s-grid", default=None)
    _add_physical(p)
    _add_out(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("potential", help="Boltzmann inversion of a trace")
    p.add_argument("--input", required=True)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--kbt", type=float, default=1.0)
    _add_out(p)
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("figure", help="reproduce a figure procedure on synthetic data")
    p.add_argument("name", choices=("fig2", "fig3", "fig4", "fig6b", "fig7a", "fig7b"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--dt", type=float, default=None)
    _add_out(p)
    p.set_defaults(func=figure)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "quantity", "unset") is None:
        args.quantity = "x" if args.regime == "harmonic" else "v"
    try:
        thread_count()
        return int(args.func(args) or 0)
    except UsageError as exc:
        _SUBPARSERS.get(args.command, parser).print_usage(sys.stderr)
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SubdiffusionError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
