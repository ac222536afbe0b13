"""Command line interface.

Exit codes: 0 success, 1 validation/usage error, 2 numerical failure
(non-convergence, degenerate probe).  Errors print one machine-parsable
line on stderr: "error: <what>".  Common flags can also be set through
environment variables (SCHATTENREC_SEED, SCHATTENREC_TRIALS,
SCHATTENREC_THREADS, SCHATTENREC_FORMAT, SCHATTENREC_MEMORY_GUARD_MB);
precedence is flag > environment > default.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, geometry, harness, matio, measurements, solvers, stability
from .errors import NumericalError, ValidationError

ENV_PREFIX = "SCHATTENREC_"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract here is exit 1
    def error(self, message):
        raise _UsageError(message)


def _env(name, cast, default):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as e:
        raise ValidationError(f"{ENV_PREFIX + name}: {e}") from e


def _resolve(flag_value, env_name, cast, default):
    if flag_value is not None:
        return flag_value
    return _env(env_name, cast, default)


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _emit(doc, out_path):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonify)
    if out_path:
        matio.atomic_write_text(out_path, text)
    else:
        print(text)


def _parse_int_list(text, what):
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as e:
        raise ValidationError(f"{what}: expected comma-separated integers") from e


def _parse_range(text, what):
    """"a:b" -> a..b inclusive; "a:b:step" -> a, a+step, ..., <= b."""
    parts = text.split(":")
    try:
        nums = [int(x) for x in parts]
    except ValueError as e:
        raise ValidationError(f"{what}: expected integers in range syntax a:b[:step]") from e
    if len(nums) == 2:
        lo, hi, step = nums[0], nums[1], 1
    elif len(nums) == 3:
        lo, hi, step = nums
    else:
        raise ValidationError(f"{what}: expected a:b or a:b:step")
    if step < 1 or hi < lo:
        raise ValidationError(f"{what}: empty range")
    return tuple(range(lo, hi + 1, step))


def build_parser():
    parser = _Parser(prog="schattenrec", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(sp, trials_default=None):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--memory-guard-mb", type=float, default=None)
        if trials_default is not None:
            sp.add_argument("--trials", type=int, default=None)

    g = sub.add_parser("gen-operator", help="create and save a measurement operator")
    g.add_argument("--kind", choices=("gaussian", "mask"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--indices", help='JSON file with [[i,j],...] pairs, or "all"')
    g.add_argument("--include-payload", action="store_true")
    common(g)

    r = sub.add_parser("recover", help="reconstruct a matrix from measurements")
    r.add_argument("--operator", required=True)
    r.add_argument("--y", required=True, help="JSON vector file of measurements")
    r.add_argument("--p", type=float, default=1.0)
    r.add_argument("--theta", type=float, default=0.0)
    r.add_argument("--beta-2s", type=float, default=1.0)
    r.add_argument("--max-iters", type=int, default=None)
    r.add_argument("--tol-residual", type=float, default=None)
    r.add_argument("--tol-change", type=float, default=None)
    r.add_argument("--trace", help="CSV path for the (iter, objective, residual) trace")
    r.add_argument("--save-minimizer", help="write the minimizer to this .smat/.json path")
    common(r)

    pr = sub.add_parser("rip-probe", help="bracket restricted isometry constants")
    pr.add_argument("--operator", required=True)
    pr.add_argument("--s", type=int, required=True)
    pr.add_argument("--refine-iters", type=int, default=5)
    common(pr, trials_default=200)

    st = sub.add_parser("stability-report", help="check recovery error bounds")
    st.add_argument("--x", required=True, help="original matrix (.smat/.json)")
    st.add_argument("--xstar", required=True, help="reconstruction (.smat/.json)")
    st.add_argument("--s", type=int, required=True)
    st.add_argument("--t", type=int, default=None)
    st.add_argument("--p", type=float, default=1.0)
    st.add_argument("--theta", type=float, default=0.0)
    st.add_argument("--gamma", type=float, help="user-certified gamma_2t")
    st.add_argument("--probe-operator", help="probe this operator for gamma instead")
    st.add_argument("--refine-iters", type=int, default=5)
    common(st, trials_default=200)

    ns = sub.add_parser("nsp-check", help="sample the null-space inequality")
    ns.add_argument("--operator", required=True)
    ns.add_argument("--s", type=int, required=True)
    ns.add_argument("--p", type=float, default=1.0)
    common(ns, trials_default=500)

    ws = sub.add_parser("width-sweep", help="empirical width scaling over m")
    ws.add_argument("--n", type=int, required=True)
    ws.add_argument("--m-list", required=True, help="comma-separated m values")
    ws.add_argument("--p", type=float, default=1.0)
    ws.add_argument("--q", type=float, default=2.0)
    ws.add_argument("--rip-constant", type=float, default=geometry.DEFAULT_WIDTH_RIP_CONSTANT)
    common(ws, trials_default=20)

    pd = sub.add_parser("phase-diagram", help="recovery success probability grid")
    pd.add_argument("--n", "--N", dest="n", type=int, required=True)
    pd.add_argument("--s-range", required=True, help="rank range a:b[:step]")
    pd.add_argument("--m-range", required=True, help="measurement range a:b[:step]")
    pd.add_argument("--seeds", type=int, default=None, help="trials per cell")
    pd.add_argument("--p", type=float, default=1.0)
    pd.add_argument("--threshold", type=float, default=harness.DEFAULT_SUCCESS_THRESHOLD)
    common(pd)

    sub.add_parser("selftest", help="run fast closed-form checks")
    return parser


def _solver_opts(args, guard_mb):
    kw = {"memory_guard_mb": guard_mb}
    if getattr(args, "max_iters", None) is not None:
        kw["max_iters"] = args.max_iters
    if getattr(args, "tol_residual", None) is not None:
        kw["tol_residual"] = args.tol_residual
    if getattr(args, "tol_change", None) is not None:
        kw["tol_change"] = args.tol_change
    if getattr(args, "trace", None):
        kw["trace"] = True
    return solvers.SolveOptions(**kw)


def _cmd_gen_operator(args, seed, guard_mb):
    if args.kind == "gaussian":
        if args.m is None:
            raise ValidationError("m: required for gaussian operators")
        A = measurements.gaussian_operator(args.n, args.m, seed=seed, guard_mb=guard_mb)
    else:
        if not args.indices:
            raise ValidationError("indices: required for mask operators")
        if args.indices == "all":
            pairs = [(i, j) for i in range(args.n) for j in range(args.n)]
        else:
            pairs = matio.load_json(args.indices)
        A = measurements.entry_mask_operator(args.n, pairs, scale=args.scale)
    if not args.out:
        raise ValidationError("out: gen-operator needs an output path")
    measurements.save_operator(A, args.out, include_payload=args.include_payload)
    print(f"wrote {args.kind} operator n={A.n} m={A.m} to {args.out}")
    return 0


def _cmd_recover(args, guard_mb):
    A = measurements.load_operator(args.operator, guard_mb)
    y = matio.load_vector(args.y)
    opts = _solver_opts(args, guard_mb)
    if args.p == 1.0:
        res = solvers.recover_nuclear(A, y, theta=args.theta, beta_2s=args.beta_2s, opts=opts)
    elif 0 < args.p < 1:
        res = solvers.recover_schatten_p(
            A, y, args.p, theta=args.theta, beta_2s=args.beta_2s, opts=opts
        )
    else:
        raise ValidationError(f"p: must be in (0, 1], got {args.p}")
    if args.trace:
        lines = ["iter,objective,residual"]
        lines += [f"{i},{o!r},{r!r}" for (i, o, r) in res.trace]
        matio.atomic_write_text(args.trace, "\n".join(lines) + "\n")
    if args.save_minimizer:
        matio.save_matrix(args.save_minimizer, res.minimizer)
    doc = asdict(res)
    doc["minimizer"] = res.minimizer.tolist()
    doc.pop("trace")
    _emit(doc, args.out)
    if not res.converged:
        print(f"error: solver did not converge: {res.status_note}", file=sys.stderr)
        return 2
    return 0


def _cmd_rip_probe(args, seed, trials, guard_mb):
    A = measurements.load_operator(args.operator, guard_mb)
    rc = measurements.estimate_restricted_constants(
        A, args.s, trials=trials, refine_iters=args.refine_iters, seed=seed, guard_mb=guard_mb
    )
    _emit(asdict(rc), args.out)
    if rc.degenerate:
        print("error: probe degenerate: alpha estimate is zero", file=sys.stderr)
        return 2
    return 0


def _cmd_stability_report(args, seed, trials, guard_mb):
    X = matio.load_matrix(args.x)
    Xs = matio.load_matrix(args.xstar)
    t = args.t if args.t is not None else args.s
    if args.gamma is not None:
        gamma, provenance = args.gamma, "user"
    elif args.probe_operator:
        A = measurements.load_operator(args.probe_operator, guard_mb)
        rc = measurements.estimate_restricted_constants(
            A, 2 * t, trials=trials, refine_iters=args.refine_iters, seed=seed, guard_mb=guard_mb
        )
        if rc.degenerate:
            print("error: probe degenerate: alpha estimate is zero", file=sys.stderr)
            return 2
        gamma, provenance = rc.gamma_hat, "probe-lower-estimate"
    else:
        raise ValidationError("gamma: supply --gamma or --probe-operator")
    report = stability.verify_bounds(
        X, Xs, s=args.s, t=t, p=args.p, theta=args.theta, gamma_2t=gamma, provenance=provenance
    )
    _emit(report.to_dict(), args.out)
    return 0


def _cmd_nsp_check(args, seed, trials, guard_mb):
    A = measurements.load_operator(args.operator, guard_mb)
    rep = geometry.nsp_check(A, args.s, args.p, trials=trials, seed=seed)
    _emit(asdict(rep), args.out)
    return 0


def _cmd_width_sweep(args, seed, trials, threads, fmt, guard_mb):
    cfg = harness.WidthSweepConfig(
        n=args.n,
        m_values=_parse_int_list(args.m_list, "m-list"),
        p=args.p,
        q=args.q,
        trials=trials,
        seed=seed,
        rip_constant=args.rip_constant,
        threads=threads,
        memory_guard_mb=guard_mb,
    )
    record = harness.run_width_sweep(cfg)
    if args.out:
        harness.write_record(record, args.out, fmt, harness.WIDTH_COLUMNS)
        print(f"wrote {len(record.rows)} rows to {args.out}")
    else:
        print(harness.rows_to_csv(record.rows, harness.WIDTH_COLUMNS), end="")
    print(json.dumps(record.summary, sort_keys=True), file=sys.stderr)
    return 0


def _cmd_phase_diagram(args, seed, threads, fmt, guard_mb):
    cfg = harness.PhaseDiagramConfig(
        n=args.n,
        s_values=_parse_range(args.s_range, "s-range"),
        m_values=_parse_range(args.m_range, "m-range"),
        trials=_resolve(args.seeds, "TRIALS", int, 20),
        seed=seed,
        p=args.p,
        success_threshold=args.threshold,
        threads=threads,
        memory_guard_mb=guard_mb,
    )
    record = harness.run_phase_diagram(cfg)
    if args.out:
        harness.write_record(record, args.out, fmt, harness.PHASE_COLUMNS)
        print(f"wrote {len(record.rows)} rows to {args.out}")
    else:
        print(harness.rows_to_csv(record.rows, harness.PHASE_COLUMNS), end="")
    print(json.dumps(record.summary, sort_keys=True), file=sys.stderr)
    return 0


def _cmd_selftest():
    checks = harness.selftest()
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    failed = sum(1 for _, ok in checks if not ok)
    if failed:
        print(f"error: selftest: {failed} check(s) failed", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        seed = _resolve(getattr(args, "seed", None), "SEED", int, 0)
        trials = _resolve(getattr(args, "trials", None), "TRIALS", int, None)
        threads = _resolve(getattr(args, "threads", None), "THREADS", int, 1)
        fmt = _resolve(getattr(args, "format", None), "FORMAT", str, "csv")
        guard_mb = _resolve(
            getattr(args, "memory_guard_mb", None),
            "MEMORY_GUARD_MB",
            float,
            measurements.DEFAULT_MEMORY_GUARD_MB,
        )
        if args.command == "gen-operator":
            return _cmd_gen_operator(args, seed, guard_mb)
        if args.command == "recover":
            return _cmd_recover(args, guard_mb)
        if args.command == "rip-probe":
            return _cmd_rip_probe(args, seed, trials or 200, guard_mb)
        if args.command == "stability-report":
            return _cmd_stability_report(args, seed, trials or 200, guard_mb)
        if args.command == "nsp-check":
            return _cmd_nsp_check(args, seed, trials or 500, guard_mb)
        if args.command == "width-sweep":
            return _cmd_width_sweep(args, seed, trials or 20, threads, fmt, guard_mb)
        if args.command == "phase-diagram":
            return _cmd_phase_diagram(args, seed, threads, fmt, guard_mb)
        if args.command == "selftest":
            return _cmd_selftest()
        parser.print_usage(sys.stderr)
        return 1
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: usage: {e}", file=sys.stderr)
        return 1
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"error: numerical: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
