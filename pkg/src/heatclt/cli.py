"""Command line entry point: ``heatclt <subcommand> [options]``.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 runtime error.
"""

import argparse
import csv
import json
import math
import os
import sys

from . import experiment, functionals, kernels, noise, oracle, solver, stats
from .errors import (DomainError, EmbeddingError, ExtentError, InsufficientData, SimulationDiverged,
                     UnsupportedError, ValidationError)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
FUNCTIONALS = ("phiN", "M1", "M2", "M3", "dirichlet", "logbound")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _out(args, name):
    if args.out_dir is None:
        return None
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _emit_csv(args, name, header, rows):
    text_rows = [header] + [list(r) for r in rows]
    path = _out(args, name)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerows(text_rows)
    if path:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(text_rows)


def _sim_config(args, replicas=None, N=None):
    N = args.N if N is None else N
    return solver.SimConfig(case=args.case, alpha=args.alpha, t=args.t, N=N, d=args.d,
                            nx=args.nx, nt=args.nt, pad=args.pad, seed=args.seed,
                            replicas=args.replicas if replicas is None else replicas,
                            noise=args.noise)


# ------------------------------------------------------------------ commands

def cmd_kernel_check(args):
    rows = []
    for a in args.alpha:
        rows.extend(kernels.identity_residuals(a, args.t))
    _emit_csv(args, "kernel_check.csv", ["identity", "alpha", "t", "residual", "tolerance", "pass"], rows)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_FAIL


def cmd_noise_check(args):
    rows = []
    for kind in args.noise:
        spec = noise.NoiseSpec.from_name(kind)
        for r in noise.covariance_check(spec, args.slices, args.cells, args.dx, args.dt, args.seed,
                                        args.max_lag):
            rows.append((spec.kind,) + r)
    _emit_csv(args, "noise_check.csv", ["noise", "lag", "estimate", "target", "se", "pass"], rows)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_FAIL


def cmd_simulate(args):
    cfg = _sim_config(args)
    path = _out(args, "replicas.jsonl")
    fh = open(path, "w") if path else sys.stdout
    n_bad = 0
    try:
        for lo in range(0, cfg.replicas, args.chunk):
            res = solver.simulate_batch(cfg, range(lo, min(lo + args.chunk, cfg.replicas)))
            for i, rep in enumerate(res.replicas):
                a = float(res.A[i, 0])
                n_bad += int(res.diverged_step[i] >= 0)
                rec = {"case": cfg.case, "alpha": cfg.alpha, "t": cfg.t, "N": cfg.N,
                       "replica": int(rep), "A_N": a if math.isfinite(a) else None,
                       "neg_fraction": float(res.neg_fraction[i]),
                       "runtime_ms": float(res.runtime_ms[i])}
                fh.write(json.dumps(rec) + "\n")
    finally:
        if path:
            fh.close()
    if n_bad:
        print(f"{n_bad} replica(s) diverged", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args):
    spec = None if args.case == 1 else noise.NoiseSpec.from_name(args.noise or "gaussian", args.d)
    sol = oracle.solve_covariance(case=args.case, alpha=args.alpha, t=args.t, N=max(args.N),
                                  spec=spec, d=args.d)
    info = {"case": args.case, "alpha": args.alpha, "t": args.t,
            "m2_t": float(sol.m2[-1]) if sol.m2 is not None else None,
            "residual": sol.residual, "integral_sigma": oracle.integral_sigma(sol)}
    rows = []
    for N in args.N:
        var, ratio = oracle.variance_of_average(sol, N)
        rows.append((N, var, ratio))
    print(json.dumps(info, default=float))
    _emit_csv(args, "oracle.csv", ["N", "sigma2_N", "sigma2_N_over_N^d"], rows)
    return EXIT_OK


def _plan(args):
    cfg = _sim_config(args, replicas=args.replicas, N=max(args.N_ladder))
    tol = {}
    if args.slope_window is not None:
        tol["slope_window"] = tuple(args.slope_window)
    return experiment.ExperimentPlan(cfg, tuple(args.N_ladder), out_dir=args.out_dir,
                                     threads=args.threads, chunk=args.chunk, n_boot=args.n_boot,
                                     with_oracle=not args.no_oracle, tolerances=tol)


def cmd_clt(args):
    plan = _plan(args)
    res = experiment.run_experiment(plan)
    sys.stdout.write(experiment.report_csv(res.summaries))
    print(json.dumps({"checks": res.manifest["checks"], "pass": res.manifest["pass"]}),
          file=sys.stderr)
    return res.exit_code


def cmd_functionals(args):
    rows = []
    t = args.t
    s = args.s if args.s is not None else 0.75 * t
    which = set(args.which)
    spec = noise.NoiseSpec.from_name(args.noise or "gaussian")
    if "phiN" in which:
        for N in args.N:
            for y in (-N, 0.0, 0.5 * N, 2.0 * N):
                v = functionals.phi_N(s, y, t, N, args.alpha)
                rows.append(("phiN", N, v, 1.0, bool(0.0 <= v <= 1.0)))
    if "M1" in which:
        # the [1, 2]-restricted value is a lower bound; oracle variances (case 1)
        sol = oracle.solve_covariance(case=1, alpha=args.alpha, t=t, N=max(args.N))
        for N in args.N:
            var = oracle.variance_of_average(sol, N)[0]
            full = functionals.M1_eval(s, t, N, args.alpha, var)
            part = functionals.M1_eval(s, t, N, args.alpha, var, z_range=(1.0, 2.0))
            rows.append(("M1", N, full, part, bool(full >= part)))
    if "M2" in which:
        sol2 = oracle.solve_covariance(case=2, t=t, N=max(args.N), spec=spec)
        for N in args.N:
            var = oracle.variance_of_average(sol2, N)[0]
            m2 = functionals.M23_eval(2, s, t, N, 1, spec, var)
            bound = N * spec.total_mass / var
            rows.append(("M2", N, m2, bound, bool(m2 <= bound)))
    if "M3" in which:
        # sigma^2 from its large-N form t f(R) N log N; then s log N M3 <= fhat(0) / f(R)
        for N in args.N:
            if N >= math.e:
                var = t * spec.total_mass * N * math.log(N)
                val = s * math.log(N) * functionals.M23_eval(3, s, t, N, 1, spec, var)
                bound = float(spec.fhat(0.0)) / spec.total_mass
                rows.append(("M3", N, val, bound, bool(val <= bound * (1 + 1e-9))))
    if "dirichlet" in which:
        for k in (1, 2, 3):
            lhs, rhs, gap = functionals.dirichlet_identity(k, args.alpha)
            rows.append((f"dirichlet_k{k}", k, lhs, rhs, bool(gap < 1e-5)))
    if "logbound" in which:
        for N in args.N:
            if N >= math.e:
                lhs, rhs, ok = functionals.log_bound_check(N, t)
                rows.append(("log_bound", N, lhs, rhs, ok))
    _emit_csv(args, "functionals.csv", ["functional", "N_or_k", "value", "reference", "pass"], rows)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_FAIL


def cmd_fit(args):
    with open(args.input) as fh:
        summaries = experiment.parse_report(fh.read())
    if args.case is not None:
        summaries = [r for r in summaries if r.case == args.case]
    cases = sorted({r.case for r in summaries})
    if len(cases) != 1:
        raise UsageError("the report holds several cases; choose one with --case")
    N = [r.N for r in summaries]
    fit = stats.fit_rate(N, [getattr(r, args.column) for r in summaries], case=cases[0])
    out = {"case": cases[0], "column": args.column, "slope": fit.slope,
           "intercept": fit.intercept, "r2": fit.r2, "dropped_smallest": fit.dropped_smallest}
    if fit.log_corrected is not None:
        out["log_corrected"] = dict(zip(("slope", "intercept", "r2"), fit.log_corrected))
    print(json.dumps(out))
    return EXIT_OK


def cmd_report(args):
    summaries = []
    for path in args.input:
        with open(path) as fh:
            summaries.extend(experiment.parse_report(fh.read()))
    table, text = experiment.emit_report(summaries)
    print(table)
    path = _out(args, "report.csv")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_sim_flags(p, N_default=32.0):
    p.add_argument("--case", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--nx", type=int, default=4)
    p.add_argument("--nt", type=int, default=32)
    p.add_argument("--pad", type=float, default=None)
    p.add_argument("--noise", choices=("white", "gaussian", "cauchy"), default=None)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--chunk", type=int, default=256)


def _add_global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--threads", type=int, default=d(1))
    p.add_argument("--out-dir", default=d(None))
    p.add_argument("--config", default=d(None), help="flat key = value file of defaults")


def build_parser():
    parser = argparse.ArgumentParser(prog="heatclt", description=__doc__.splitlines()[0])
    _add_global_flags(parser, suppress=False)
    # the global flags are also accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[common], **k)

    p = sub.add_parser("kernel-check", help="residuals of the kernel identities")
    p.add_argument("--alpha", type=_floats, default=[1.25, 1.5, 2.0])
    p.add_argument("--t", type=float, default=1.0)
    p.set_defaults(func=cmd_kernel_check)

    p = sub.add_parser("noise-check", help="empirical vs target covariance of colored slices")
    p.add_argument("--noise", nargs="+", choices=("gaussian", "cauchy"), default=["gaussian"])
    p.add_argument("--slices", type=int, default=100_000)
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--dx", type=float, default=0.1)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--max-lag", type=int, default=10)
    p.set_defaults(func=cmd_noise_check)

    p = sub.add_parser("simulate", help="per-replica window averages as JSON lines")
    _add_sim_flags(p)
    p.add_argument("--N", type=float, default=32.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="deterministic covariance and variance of averages")
    p.add_argument("--case", type=int, choices=(1, 2), default=1)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--noise", choices=("gaussian", "cauchy"), default=None)
    p.add_argument("--N", type=_floats, default=[64.0, 256.0, 1024.0])
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("clt", help="run an N-ladder and report distances to N(0,1)")
    _add_sim_flags(p)
    p.add_argument("--N-ladder", type=_floats, default=[16, 32, 64, 128, 256, 512])
    p.add_argument("--n-boot", type=int, default=20)
    p.add_argument("--no-oracle", action="store_true")
    p.add_argument("--slope-window", type=_floats, default=None)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("functionals", help="deterministic functional checks")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--noise", choices=("gaussian", "cauchy"), default=None)
    p.add_argument("--N", type=_floats, default=[16.0, 64.0, 256.0])
    p.add_argument("--which", nargs="+", choices=FUNCTIONALS, default=list(FUNCTIONALS))
    p.set_defaults(func=cmd_functionals)

    p = sub.add_parser("fit", help="log-log rate fit of a report column")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default="sup_dist", choices=("sup_dist", "tv_dist", "ks_stat"))
    p.add_argument("--case", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="tabulate one or more summary CSV files")
    p.add_argument("--input", nargs="+", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, argv):
    """Config-file values become defaults; explicit flags still win.

    Values are stored as strings, which argparse converts with each option's
    ``type`` when the flag is absent.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = experiment.load_config(known.config)
    parsers = [parser] + [sp for a in parser._subparsers._group_actions for sp in a.choices.values()]
    used = set()
    for p in parsers:
        own = {a.dest: a for a in p._actions}
        mine = {}
        for k, v in values.items():
            if k in own:
                a = own[k]
                mine[k] = (v.lower() in ("1", "true", "yes")) if a.const is True else v
                used.add(k)
        p.set_defaults(**mine)
    unknown = sorted(set(values) - used)
    if unknown:
        raise ValidationError(f"unknown config keys {unknown}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, ValidationError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"heatclt: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, DomainError, ValidationError, InsufficientData, UnsupportedError) as exc:
        print(f"heatclt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, EmbeddingError, ExtentError, SimulationDiverged, RuntimeError) as exc:
        print(f"heatclt: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:   # anything unexpected is still a runtime failure
        print(f"heatclt: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
