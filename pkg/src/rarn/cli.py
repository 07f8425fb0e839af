"""Command-line entry point: ``rarn {run,sweep,check,fdtest}``.

Exit codes: 0 converged and clean, 2 budget exhausted / stalled / partial
sweep, 3 invariant violation. Configuration errors exit with 1.
"""

import argparse
import json
import os
import sys

import numpy as np

from rarn.errors import ConfigError, RarnError
from rarn.harness import build_problem, load_config, run_single, run_sweep, with_overrides
from rarn.objective import HolderWell, check_gradient_fd, check_hessvec_fd
from rarn.report import RunReport, hard, trace_to_csv, verify_invariants

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_VIOLATION = 3

GRAD_FD_TOL = 1e-5
HESS_FD_TOL = 1e-4


def _summary(report, violations):
    return {
        "solver": report.solver,
        "status": report.status,
        "iterations": report.iterations,
        "successful": report.successful,
        "f_final": report.f_final,
        "grad_norm_final": report.grad_norm_final,
        "certificate": report.certificate,
        "hess_vec_products": report.counters.get("hess_vec_products"),
        "max_sigma": report.max_sigma,
        "hard_violations": len(violations),
        "warning_counts": report.warning_counts,
    }


def _exit_code(status_ok, n_violations):
    if n_violations:
        return EXIT_VIOLATION
    return EXIT_OK if status_ok else EXIT_BUDGET


def _load(args):
    cfg = load_config(args.config, problem=args.problem)
    return with_overrides(cfg, seed=args.seed, solver=args.solver)


def cmd_run(args):
    cfg = _load(args)
    report = run_single(cfg, out_dir=args.out)
    violations = hard(verify_invariants(report))
    if args.format == "csv":
        sys.stdout.write(trace_to_csv(report.records))
    else:
        print(json.dumps(_summary(report, violations), indent=1, sort_keys=True))
    for v in violations:
        print(f"violation: {v['kind']} at k={v['k']}: {v['detail']}", file=sys.stderr)
    return _exit_code(report.converged, len(violations))


def cmd_sweep(args):
    cfg = _load(args)
    res = run_sweep(cfg, out_dir=args.out, workers=args.workers)
    if args.format == "csv":
        sys.stdout.write(res.to_csv())
    else:
        print(res.to_json())
    return _exit_code(not res.partial, res.violations)


def cmd_check(args):
    path = args.report
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    try:
        with open(path, encoding="utf-8") as fh:
            report = RunReport.from_json(fh.read())
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot load report {path}: {exc}") from None
    found = verify_invariants(report)
    bad = hard(found)
    for v in found:
        print(f"{v.get('severity', 'hard')}: {v['kind']} at k={v['k']}: {v['detail']}")
    print(f"{len(bad)} hard violation(s), {len(found) - len(bad)} soft finding(s)")
    return EXIT_VIOLATION if bad else EXIT_OK


def _fd_points(problem, rng, count):
    pts = []
    while len(pts) < count:
        x = problem.manifold.random_point(rng)
        if isinstance(problem, HolderWell):
            # keep away from the center, where the Hessian is only Holder
            d = x - problem.center
            x = problem.center + np.where(np.abs(d) < 1e-2, np.where(d >= 0, 1e-2, -1e-2), d)
        pts.append(x)
    return pts


def cmd_fdtest(args):
    cfg = _load(args)
    problem, _ = build_problem(cfg)
    rng = np.random.default_rng(cfg.seed)
    grad_err = hess_err = 0.0
    for x in _fd_points(problem, rng, args.points):
        grad_err = max(grad_err, check_gradient_fd(problem, x, rng))
        hess_err = max(hess_err, check_hessvec_fd(problem, x, rng))
    ok = grad_err <= GRAD_FD_TOL and hess_err <= HESS_FD_TOL
    out = {"problem": problem.name, "n": problem.n, "grad_rel_err": grad_err, "grad_tol": GRAD_FD_TOL, "hess_rel_err": hess_err, "hess_tol": HESS_FD_TOL, "ok": ok}
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser():
    p = argparse.ArgumentParser(prog="rarn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="INI experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
        sp.add_argument("--solver", choices=["rar", "rtr"], default=None, help="override [run] solver")
        sp.add_argument("--problem", default=None, help="select [problem.NAME] or a built-in problem")

    sp = sub.add_parser("run", help="single solver run")
    common(sp)
    sp.add_argument("--out", default=None, help="directory for report.json and trace.csv")
    sp.add_argument("--format", choices=["json", "csv"], default="json", help="stdout format: summary json or trace csv")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="epsilon sweep with slope fits")
    common(sp)
    sp.add_argument("--out", default=None, help="directory for sweep.csv and sweep.json")
    sp.add_argument("--format", choices=["json", "csv"], default="json", help="stdout format")
    sp.add_argument("--workers", type=int, default=None, help="parallel sweep points (default from config)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="re-verify invariants of a saved report")
    sp.add_argument("report", help="report.json or a directory containing it")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("fdtest", help="finite-difference gradient and Hessian checks")
    common(sp)
    sp.add_argument("--points", type=int, default=5, help="number of random test points")
    sp.set_defaults(func=cmd_fdtest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RarnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
