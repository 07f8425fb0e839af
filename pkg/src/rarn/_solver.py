"""Pieces shared by the two outer solvers."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from rarn.errors import ConfigError
from rarn.manifold import RetractionKind
from rarn.objective import Counters, evaluate
from rarn.report import RunReport

ORTHO_TOL = 1e-8


def require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_retraction(value):
    try:
        return RetractionKind.parse(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_dict(cfg):
    out = {}
    for name in cfg.__dataclass_fields__:
        v = getattr(cfg, name)
        out[name] = v.value if isinstance(v, RetractionKind) else v
    return out


@dataclass
class SubproblemResult:
    """What the subproblem process hands back to the outer loop.

    ``h_eta`` is H eta with the true (unshifted) Hessian. ``kind`` is one of
    krylov, recalc, meo or terminate.
    """

    kind: str
    eta: Optional[np.ndarray] = None
    h_eta: Optional[np.ndarray] = None
    iters: int = 0
    certificate: Optional[dict] = None
    cauchy_change: Optional[float] = None
    xi1_norm: float = math.nan
    on_boundary: bool = False


def check_orthogonality(state, report, k):
    Q = state.q_matrix()
    err = float(np.abs(Q @ Q.T - np.eye(len(Q))).max()) if len(Q) else 0.0
    if err > ORTHO_TOL:
        report.violate("lanczos_orthogonality", k, f"max |Q^T Q - I| = {err:.2e}")


def describe_problem(problem):
    d = {"name": problem.name, "n": problem.n}
    if hasattr(problem, "mu"):
        d["mu"] = problem.mu
    return d


def start(problem, x0, solver, cfg, seed):
    counters = Counters()
    x = problem.manifold.check_point(x0)
    report = RunReport(solver=solver, config=config_dict(cfg), seed=seed, problem=describe_problem(problem))
    ev = evaluate(problem, x, counters)
    return counters, report, ev


def finish(report, ev, counters, status):
    report.status = status
    report.x_final = [float(v) for v in ev.x]
    report.f_final = float(ev.value)
    report.grad_norm_final = float(ev.grad_norm)
    report.counters = counters.as_dict()
    return report
