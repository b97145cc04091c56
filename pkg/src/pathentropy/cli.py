"""Command-line interface.

Exit codes: 0 success, 1 domain failure (invalid model, infeasible target,
strict-mode regression), 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import document, maxent, models
from .chain import chain_stats
from .document import DocumentError, ModelDocument
from .entropy import entropy_report, path_entropy
from .errors import PathEntropyError
from .sampler import estimate, simulate_paths
from .system import steady_state, validate

WORKERS_ENV = "PATHENTROPY_WORKERS"
WANG_FIELDS = {f.name for f in dataclasses.fields(models.WangParameters)}
LN2 = math.log(2.0)


class UsageError(Exception):
    """Bad flag values detected after argparse (exit 2)."""


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


def txt(v: float) -> str:
    return f"{v:#.4g}" if math.isfinite(v) else str(v)


def num(v: float) -> str:
    return f"{v:.12g}"


def parse_floats(text: str, n: Optional[int] = None) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}")
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} values, got {len(vals)} in {text!r}")
    return vals


def parse_range(spec: str) -> np.ndarray:
    """``start:stop:step``; stop is included when within half a step of a grid point."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"range must be start:stop:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"range must be numeric, got {spec!r}")
    if not step > 0 or stop < start:
        raise UsageError("range needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 0.5)) + 1
    return np.round(start + step * np.arange(n), 12)


def parse_bounds(spec: str) -> list[tuple[float, float]]:
    """``lo:hi`` for a uniform box, or four comma-separated ``lo:hi`` pairs."""
    out = []
    for piece in spec.split(","):
        try:
            lo, hi = (float(p) for p in piece.split(":"))
        except ValueError:
            raise UsageError(f"bounds must look like lo:hi, got {piece!r}")
        if hi < lo:
            raise UsageError(f"empty bound {piece!r}")
        out.append((lo, hi))
    if len(out) == 1:
        out = out * 4
    if len(out) != 4:
        raise UsageError("bounds need one or four lo:hi pairs")
    return out


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


# --- documents on the command line -----------------------------------------------


def load_model(args) -> ModelDocument:
    if args.builtin:
        params = {}
        for item in args.param or []:
            if "=" not in item:
                raise UsageError(f"--param expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            params[k] = int(v) if k == "row" else float(v)
        return document.from_dict({"schema_version": document.SCHEMA_VERSION,
                                   "builtin": {"name": args.builtin, "params": params}})
    if not args.model:
        raise UsageError("give a model file or --builtin")
    if args.model == "-":
        return document.loads(sys.stdin.read())
    return document.load(args.model)


def add_model_args(p):
    p.add_argument("model", nargs="?", help="YAML model document ('-' for stdin)")
    p.add_argument("--builtin", choices=document.BUILTINS, help="use a built-in model")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="built-in parameter, e.g. xi=2 or row=4 (repeatable)")


# --- subcommands ---------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    doc = load_model(args)
    B, u = doc.arrays()
    report = validate(B, u, tol=args.tol)
    if report.is_valid:
        print("valid", file=out)
        return 0
    for v in report.violations:
        loc = ",".join(str(i + 1) for i in v.location)
        print(f"{v.code}\t{loc}\t{v.magnitude:.6g}", file=out)
    return 1


def analysis_rows(sys_, log_base: str = "nats"):
    """``(name, value)`` pairs of every reported quantity; entropies in the chosen unit."""
    k = 1.0 / LN2 if log_base == "bits" else 1.0
    rep = entropy_report(sys_)
    st = chain_stats(sys_)
    x = steady_state(sys_).x_star
    rows = [
        ("H", k * rep.path_entropy),
        ("H_beta", k * rep.entry_entropy),
        ("H_jump", k * rep.jump_entropy),
        ("H_sojourn", k * rep.sojourn_entropy),
        ("theta", k * rep.rate_per_time),
        ("theta_J", k * rep.rate_per_jump),
        ("mean_transit", rep.mean_transit),
        ("expected_jumps", rep.expected_jumps),
    ]
    rows += [(f"x_{j + 1}", float(x[j])) for j in range(sys_.d)]
    rows += [(f"occupation_{j + 1}", float(st.mean_occupation[j])) for j in range(sys_.d)]
    rows += [(f"visits_{j + 1}", float(st.expected_visits[j])) for j in range(sys_.d)]
    rows += [(f"exit_{j + 1}", float(st.exit_distribution[j])) for j in range(sys_.d)]
    op = rep.one_pool
    rows += [("one_pool_lambda", op.lam), ("one_pool_H", k * op.H),
             ("one_pool_theta", k * op.theta), ("one_pool_theta_J", k * op.theta_J)]
    return rows


def cmd_analyze(args, out) -> int:
    sys_ = load_model(args).to_system()
    rows = analysis_rows(sys_, args.log_base)
    if args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for name, v in rows:
            w.writerow([name, num(v)])
        return 0
    unit = args.log_base
    print(f"model: {sys_.label or 'unnamed'} (d={sys_.d})", file=out)
    width = max(len(n) for n, _ in rows)
    for name, v in rows:
        suffix = f"  [{unit}]" if name.startswith(("H", "theta", "one_pool_H", "one_pool_theta")) else ""
        print(f"{name:<{width}}  {txt(v)}{suffix}", file=out)
    return 0


def cmd_simulate(args, out) -> int:
    sys_ = load_model(args).to_system()
    table = simulate_paths(sys_, args.n_paths, args.seed, workers=args.workers,
                           max_jumps=args.max_jumps)
    mc = estimate(sys_, args.n_paths, args.seed, table=table)
    st = chain_stats(sys_)
    checks = [("mean_transit", mc.mean_transit, st.mean_transit),
              ("expected_jumps", mc.mean_jumps, st.expected_jumps)]
    checks += [(f"occupation_{j + 1}", mc.mean_occupation[j], float(st.mean_occupation[j]))
               for j in range(sys_.d)]
    checks += [(f"exit_{j + 1}", mc.exit_distribution[j], float(st.exit_distribution[j]))
               for j in range(sys_.d)]
    checks.append(("entropy", mc.entropy, path_entropy(sys_)))

    print(f"model: {sys_.label or 'unnamed'} (d={sys_.d})", file=out)
    print(f"paths: {mc.n_paths}  seed: {mc.seed}", file=out)
    print(f"{'quantity':<16} {'estimate':>11} {'std_error':>11} {'analytic':>11} {'z':>8}", file=out)
    worst = 0.0
    for name, est, exact in checks:
        z = est.z_score(exact)
        worst = max(worst, abs(z))
        print(f"{name:<16} {txt(est.estimate):>11} {txt(est.std_error):>11} "
              f"{txt(exact):>11} {z:>8.2f}", file=out)
    if args.paths_csv:
        with open(args.paths_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "n_jumps", "transit_time", "exit_pool", "log_density"]
                       + [f"occupation_{j + 1}" for j in range(sys_.d)])
            for i in range(len(table.n_jumps)):
                w.writerow([i + 1, int(table.n_jumps[i]), num(table.transit_time[i]),
                            int(table.exit_pool[i]) + 1, num(table.log_density[i])]
                           + [num(v) for v in table.occupation[i]])
    if args.strict and worst > 5.0:
        print(f"error: STRICT: largest |z| = {worst:.2f} exceeds 5", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args, out) -> int:
    values = parse_range(args.range) if args.range else models.default_grid(args.family)
    overrides = {}
    for item in args.param or []:
        k, sep, v = item.partition("=")
        if not sep or k not in WANG_FIELDS or k == "epsilon":
            raise UsageError(f"--param expects one of {', '.join(sorted(WANG_FIELDS - {'epsilon'}))}=VALUE")
        overrides[k] = parse_floats(v, 1)[0]
    if overrides and args.family != "wang":
        raise UsageError("--param applies to the wang family only")
    family = (lambda eps: models.wang(epsilon=eps, **overrides)) if overrides else args.family
    rows, failures = models.sweep(family, values, workers=args.workers)
    for f in failures:
        print(f"skipped {args.family} {num(f.param)}: {f.error}", file=sys.stderr)
    if args.strict and failures:
        print(f"error: STRICT: {len(failures)} invalid parameter value(s)", file=sys.stderr)
        return 1
    pname = "xi" if args.family == "emanuel" else "epsilon"
    d = len(rows[0].stocks) if rows else 0
    header = [pname] + [f"x_{j + 1}" for j in range(d)] + list(models.SweepRow.CSV_FIELDS) + ["rate_11"]

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([num(r.param)] + [num(v) for v in r.stocks]
                       + [num(v) for v in r.values()] + [num(r.rate_11)])

    feats = models.features(args.family, rows, **overrides)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write(fh)
        prefix = ""
    else:
        write(out)
        prefix = "# "
    print(f"{prefix}rows {len(rows)}  skipped {len(failures)}", file=out)
    for k, v in feats.items():
        print(f"{prefix}{k} = {txt(v)}", file=out)
    return 0


def cmd_maxent(args, out) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.kind == "transit":
            u = parse_floats(args.u) if args.u else [1.0] + [0.0] * (args.d - 1)
            if len(u) != args.d:
                raise UsageError(f"--u needs {args.d} values")
            prob = maxent.TransitConstraintProblem(args.d, tuple(u), args.T)
            sys_ = maxent.maxent_fixed_transit(prob)
        else:
            x = parse_floats(args.xstar)
            u = tuple(parse_floats(args.u)) if args.u else None
            if u is not None and len(u) != len(x):
                raise UsageError("--u and --xstar need the same length")
            prob = maxent.SteadyStateConstraintProblem(tuple(x), u)
            if args.method == "dual":
                if u is None:
                    raise UsageError("--method dual needs --u")
                sys_ = maxent.maxent_steady_state_dual(prob.xstar, u)
            else:
                sys_ = maxent.maxent_fixed_steady_state(prob)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out.write(document.dumps(ModelDocument.from_system(sys_)))
    if args.verify:
        if args.kind == "transit":
            got = chain_stats(sys_).mean_transit
            ok = math.isclose(got, args.T, rel_tol=1e-9)
            msg = f"mean transit {got:.12g} (target {args.T:.12g})"
        else:
            got = steady_state(sys_).x_star
            ok = np.allclose(got, prob.xstar, rtol=1e-9, atol=0)
            msg = f"steady state {[float(v) for v in got]} (target {list(prob.xstar)})"
        print(f"verify: {msg}; H = {path_entropy(sys_):.12g}", file=sys.stderr)
        if not ok:
            print("error: VERIFY: constraint not met", file=sys.stderr)
            return 1
    return 0


IDENTIFY_CSV = ("start_B12", "start_B21", "start_z1", "start_z2",
                "B12", "B21", "z1", "z2", "theta", "H", "mean_transit")


def subsample(n: int, k: int) -> np.ndarray:
    """Evenly spread deterministic subset of ``range(n)``; ``k = 0`` keeps all."""
    if k == 0 or k >= n:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, k)).astype(int))


def cmd_identify(args, out) -> int:
    g = maxent.GammaConstraints(*parse_floats(args.gamma, 3))
    u = parse_floats(args.u, 2)
    res = maxent.identify(g, u=u, grid_mesh=args.mesh, bounds=parse_bounds(args.bounds),
                          objective=args.objective, projection=args.projection,
                          scan_points=args.scan_points, workers=args.workers)
    p = res.best_params
    B = res.best_system.B
    print(f"gamma: {', '.join(txt(v) for v in (g.gamma1, g.gamma2, g.gamma3))}", file=out)
    print(f"objective: {res.objective}", file=out)
    print(f"B21*B12 = {txt(g.product)}", file=out)
    for s in res.feasible.segments:
        name = "B21" if s.kind == "b12_zero" else "B12"
        extra = {"b21_zero": " (B21 = 0)", "b12_zero": " (B12 = 0)"}.get(s.kind, "")
        print(f"feasible {name} in [{txt(s.lo)}, {txt(s.hi)}]{extra}", file=out)
    print(f"grid starts: {res.n_starts}  feasible: {res.n_feasible}  "
          f"converged: {res.n_converged}  discarded: {res.n_starts - res.n_feasible}", file=out)
    print(f"theta_max: {txt(res.best_rate)}", file=out)
    print(f"objective_max: {txt(res.best_value)}  (dense scan: {txt(res.scan_value)})", file=out)
    print(f"B12 = {txt(p[0])}  B21 = {txt(p[1])}  z1 = {txt(p[2])}  z2 = {txt(p[3])}", file=out)
    print(f"B = [[{txt(B[0, 0])}, {txt(B[0, 1])}], [{txt(B[1, 0])}, {txt(B[1, 1])}]]", file=out)
    print(f"local maxima: {len(res.local_maxima)}", file=out)
    for m in res.local_maxima:
        print(f"  B12 = {txt(m.params[0])}  B21 = {txt(m.params[1])}  theta = {txt(m.theta)}  "
              f"H = {txt(m.H)}  mean_transit = {txt(m.mean_transit)}  starts = {m.n_starts}", file=out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(IDENTIFY_CSV)
            t = res.starts
            if t is None:
                m = res.local_maxima[0]
                w.writerow([""] * 4 + [num(v) for v in m.params]
                           + [num(m.theta), num(m.H), num(m.mean_transit)])
            else:
                for i in subsample(len(t.value), args.sample):
                    w.writerow([num(v) for v in t.starts[i]] + [num(v) for v in t.params[i]]
                               + [num(t.theta[i]), num(t.H[i]), num(t.mean_transit[i])])
    return 0


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathentropy",
                                 description="Path entropy of linear compartmental systems.")
    sub = ap.add_subparsers(dest="command", required=True)
    workers_help = f"worker threads (default: ${WORKERS_ENV} or CPU count)"

    p = sub.add_parser("validate", help="check compartmental-system invariants")
    add_model_args(p)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="entropy, rates and transit statistics")
    add_model_args(p)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--log-base", choices=("nats", "bits"), default="nats")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo check against analytic values")
    add_model_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-paths", type=positive_int, default=100_000)
    p.add_argument("--workers", type=positive_int, default=None, help=workers_help)
    p.add_argument("--max-jumps", type=positive_int, default=10_000_000)
    p.add_argument("--paths-csv", help="write per-path summaries here")
    p.add_argument("--strict", action="store_true", help="exit 1 if any |z| > 5")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="entropy curves over a model parameter")
    p.add_argument("family", choices=tuple(models.FAMILIES))
    p.add_argument("range", nargs="?", help="start:stop:step (default: built-in grid)")
    p.add_argument("--out", help="CSV output path (default: standard output)")
    p.add_argument("--workers", type=positive_int, default=None, help=workers_help)
    p.add_argument("--strict", action="store_true", help="exit 1 on any invalid value")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="override a Wang parameter (mu_b, F_NPP, K_s, V_s); repeatable")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("maxent", help="closed-form maximum-entropy models")
    msub = p.add_subparsers(dest="kind", required=True)
    q = msub.add_parser("transit", help="fixed mean transit time")
    q.add_argument("--d", type=positive_int, required=True)
    q.add_argument("--u", help="comma-separated input vector (default: all into pool 1)")
    q.add_argument("--T", type=float, required=True, help="mean transit time")
    q.add_argument("--verify", action="store_true")
    q.set_defaults(func=cmd_maxent)
    q = msub.add_parser("steady", help="fixed steady-state stocks")
    q.add_argument("--xstar", required=True)
    q.add_argument("--u", help="input vector; the closed form replaces it by sqrt(xstar)")
    q.add_argument("--method", choices=("closed", "dual"), default="closed",
                   help="'dual' solves numerically and keeps the given --u")
    q.add_argument("--verify", action="store_true")
    q.set_defaults(func=cmd_maxent)

    p = sub.add_parser("identify", help="max-entropy two-pool model from transfer-function data")
    p.add_argument("--gamma", required=True, help="g1,g2,g3")
    p.add_argument("--u", default="1,0")
    p.add_argument("--mesh", type=float, default=0.2)
    p.add_argument("--bounds", default="0:5", help="lo:hi or four comma-separated lo:hi")
    p.add_argument("--objective", default="rate-per-time",
                   choices=("rate-per-time", "path-entropy", "rate-per-jump"))
    p.add_argument("--projection", choices=("eliminate", "nearest"), default="eliminate")
    p.add_argument("--scan-points", type=positive_int, default=20001)
    p.add_argument("--workers", type=positive_int, default=None, help=workers_help)
    p.add_argument("--csv", help="write per-start local maxima here")
    p.add_argument("--sample", type=nonneg_int, default=1000,
                   help="rows written to --csv (0 = every feasible start)")
    p.set_defaults(func=cmd_identify)
    return ap


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) is None:
        args.workers = default_workers()
    try:
        if args.command == "identify" and not args.mesh > 0:
            raise UsageError("--mesh must be positive")
        return args.func(args, out)
    except (UsageError, DocumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PathEntropyError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
