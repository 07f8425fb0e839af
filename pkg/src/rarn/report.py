"""Run reports: per-iteration trace, JSON/CSV emission and invariant re-checks."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

# how many detailed entries to keep per warning kind; the rest are only counted
MAX_EVENTS_PER_KIND = 20
DECREASE_SLACK = 1e-10
BOUNDARY_RTOL = 1e-12


@dataclass
class IterRecord:
    """One outer iteration.

    ``reg`` is sigma_k (rar) or Delta_k (rtr) and ``reg_next`` its update.
    ``model_decrease`` is the unregularized m(0) - m(eta) and ``reg_term``
    the lower bound it must meet: phi(eta) for rar, eps_h ||eta||^2 / 4 for rtr.
    """

    k: int
    f: float
    grad_norm: float
    reg: float
    reg_next: float
    eta_norm: float
    rho: float
    success: bool
    model_decrease: float
    reg_term: float
    step_kind: str
    subproblem_iters: int
    hv_cumulative: int
    f_trial: float


_FIELD_TYPES = {f.name: f.type for f in fields(IterRecord)}


@dataclass
class RunReport:
    solver: str
    config: dict
    seed: Optional[int] = None
    problem: dict = field(default_factory=dict)
    records: List[IterRecord] = field(default_factory=list)
    status: str = "budget"
    x_final: List[float] = field(default_factory=list)
    f_final: float = math.nan
    grad_norm_final: float = math.nan
    certificate: Optional[dict] = None
    counters: dict = field(default_factory=dict)
    final_subproblem_products: int = 0
    max_sigma: Optional[float] = None
    warnings: List[dict] = field(default_factory=list)
    warning_counts: dict = field(default_factory=dict)
    violations: List[dict] = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.records)

    @property
    def successful(self):
        return sum(1 for r in self.records if r.success)

    @property
    def converged(self):
        return self.status == "converged"

    def warn(self, kind, k, detail):
        n = self.warning_counts.get(kind, 0)
        self.warning_counts[kind] = n + 1
        if n < MAX_EVENTS_PER_KIND:
            self.warnings.append({"kind": kind, "k": k, "detail": detail})

    def violate(self, kind, k, detail):
        self.violations.append({"kind": kind, "k": k, "detail": detail, "severity": "hard"})

    def to_dict(self):
        d = asdict(self)
        d["iterations"] = self.iterations
        d["successful"] = self.successful
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("iterations", None)
        d.pop("successful", None)
        d["records"] = [IterRecord(**r) for r in d.get("records", [])]
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def trace_to_csv(records):
    buf = io.StringIO()
    names = [f.name for f in fields(IterRecord)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in records:
        w.writerow([repr(getattr(r, n)) if isinstance(getattr(r, n), float) else getattr(r, n) for n in names])
    return buf.getvalue()


def _parse_cell(name, text):
    kind = _FIELD_TYPES[name]
    if kind in (bool, "bool"):
        return text == "True"
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def trace_from_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    return [IterRecord(**{k: _parse_cell(k, v) for k, v in row.items()}) for row in rows]


def _close(a, b):
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=0.0)


def _check_rar_update(r, cfg):
    sigma = r.reg
    if r.rho > cfg["rho2"]:
        expect = max(cfg["sigma_lower"], cfg["kappa1"] * sigma)
    elif r.rho >= cfg["rho1"]:
        expect = sigma
    else:
        expect = cfg["kappa2"] * sigma
    problems = []
    if not _close(r.reg_next, expect):
        problems.append(f"sigma update {sigma} -> {r.reg_next}, expected {expect} at rho={r.rho}")
    if r.success != (r.rho >= cfg["rho1"]):
        problems.append(f"acceptance flag {r.success} inconsistent with rho={r.rho}")
    if r.reg_next < cfg["sigma_lower"] * (1 - 1e-12):
        problems.append(f"sigma {r.reg_next} below sigma_lower")
    return problems


def _check_rtr_update(r, cfg):
    delta = r.reg
    if r.rho > 0.75 and r.eta_norm >= delta * (1.0 - BOUNDARY_RTOL):
        expect = min(cfg["delta_max"], cfg["kappa2"] * delta)
    elif r.rho < 0.25:
        expect = cfg["kappa1"] * delta
    else:
        expect = delta
    problems = []
    if not _close(r.reg_next, expect):
        problems.append(f"radius update {delta} -> {r.reg_next}, expected {expect} at rho={r.rho}")
    if r.success != (r.rho >= cfg["rho"]):
        problems.append(f"acceptance flag {r.success} inconsistent with rho={r.rho}")
    if not 0.0 < r.reg_next <= cfg["delta_max"] * (1 + 1e-12):
        problems.append(f"radius {r.reg_next} outside (0, delta_max]")
    return problems


def step_bound(grad_norm, sigma, omega, beta):
    """Upper bound on ||eta|| for power-regularized steps, given a Hessian norm bound beta."""
    a = (3.0 * (beta + 1.0) / sigma) ** (1.0 / omega)
    b = min(grad_norm, (6.0 * grad_norm / sigma) ** (1.0 / (1.0 + omega)))
    return max(a, b)


def verify_invariants(report):
    """Re-check a finished trace; returns a list of violation dicts.

    Hard violations: update-rule legality, monotone f over accepted steps,
    model decrease >= reg_term, the rtr accepted-decrease bound, counter
    conservation and the runtime hard violations recorded during the run.
    The step-size bound is soft since it relies on an estimated Hessian norm.
    """
    out = list(report.violations)
    cfg = report.config
    recs = report.records

    def add(kind, k, detail, severity="hard"):
        out.append({"kind": kind, "k": k, "detail": detail, "severity": severity})

    prev_hv = 0
    for i, r in enumerate(recs):
        if r.k != i:
            add("index", r.k, f"record {i} carries k={r.k}")
        check = _check_rar_update if report.solver == "rar" else _check_rtr_update
        for msg in check(r, cfg):
            add("update_rule", r.k, msg)
        if i + 1 < len(recs):
            nxt = recs[i + 1]
            if nxt.reg != r.reg_next:
                add("update_rule", r.k, f"next iteration starts from {nxt.reg}, not {r.reg_next}")
            f_expect = r.f_trial if r.success else r.f
            if nxt.f != f_expect:
                add("monotone_f", r.k, f"next f {nxt.f} does not match {'trial' if r.success else 'current'} value {f_expect}")
        if r.success and not r.f_trial <= r.f:
            add("monotone_f", r.k, f"accepted step increased f: {r.f} -> {r.f_trial}")
        if r.model_decrease < r.reg_term - DECREASE_SLACK:
            add("cauchy_decrease", r.k, f"m(0)-m(eta)={r.model_decrease:.3e} below {r.reg_term:.3e}")
        if report.solver == "rtr" and r.success:
            need = cfg["rho"] * cfg["eps_h"] / 4.0 * r.eta_norm**2
            if r.f - r.f_trial < need - DECREASE_SLACK:
                add("rtr_decrease", r.k, f"decrease {r.f - r.f_trial:.3e} below {need:.3e}")
        if report.solver == "rar" and r.step_kind != "recalc":
            beta = report.counters.get("hess_norm_max", 0.0)
            bound = step_bound(r.grad_norm, r.reg, cfg["omega"], beta)
            if r.eta_norm > bound * (1 + 1e-10):
                add("step_bound", r.k, f"||eta||={r.eta_norm:.3e} exceeds {bound:.3e}", "soft")
        if r.hv_cumulative < prev_hv:
            add("counters", r.k, "hv_cumulative decreased")
        prev_hv = r.hv_cumulative
    total = report.counters.get("hess_vec_products")
    if total is not None and prev_hv + report.final_subproblem_products != total:
        add("counters", len(recs), f"trace accounts for {prev_hv + report.final_subproblem_products} products, counters say {total}")
    return out


def hard(violations):
    return [v for v in violations if v.get("severity", "hard") == "hard"]
