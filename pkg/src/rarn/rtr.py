"""Riemannian trust region method with an eps_h-regularized model (RTR).

Small gradients go straight to the eigenvalue oracle, which either certifies
approximate second-order stationarity or supplies a negative-curvature step
of length Delta. Otherwise Lanczos on H + 2 eps_h I is run until the reduced
solution meets TC.1 or hits the trust-region boundary.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from rarn._solver import (
    SubproblemResult,
    check_orthogonality,
    config_dict,
    finish,
    parse_retraction,
    require,
    start,
)
from rarn.krylov import init_basis, lanczos_extend, lift, solve_reduced_tr
from rarn.manifold import RetractionKind
from rarn.meo import Certified, meo_budget, meo_run
from rarn.model import ModelAt, TrQuad, cauchy_model_change, model_change, residual_ok, rho, tcc_slack, unregularized_decrease
from rarn.objective import evaluate, value_at
from rarn.report import BOUNDARY_RTOL, IterRecord

DELTA_STALL = 1e-300


@dataclass(frozen=True)
class RtrConfig:
    """Parameters of the RTR method. theta1 defaults to 1 (the smooth regime)."""

    eps_g: float = 1e-5
    eps_h: float = 1e-3
    theta1: Optional[float] = None
    kappa1: float = 0.25
    kappa2: float = 2.0
    delta_max: float = 10.0
    delta0: float = 1.0
    rho: float = 0.05
    c_sub: float = 50.0
    delta: float = 0.05
    c_meo: float = 4.0
    max_outer: int = 10000
    retraction: RetractionKind = RetractionKind.PROJECTION

    def __post_init__(self):
        if self.theta1 is None:
            object.__setattr__(self, "theta1", 1.0)
        object.__setattr__(self, "retraction", parse_retraction(self.retraction))
        for name in ("eps_g", "eps_h", "theta1"):
            v = getattr(self, name)
            require(0.0 < v <= 1.0, f"{name} must lie in (0, 1], got {v}")
        require(0.0 < self.kappa1 < 1.0, "kappa1 must lie in (0, 1)")
        require(self.kappa2 >= 1.0, "kappa2 must be >= 1")
        require(self.delta_max > 0.0, "delta_max must be positive")
        require(0.0 < self.delta0 <= self.delta_max, "delta0 must lie in (0, delta_max]")
        require(0.0 <= self.rho < 0.25, "rho must lie in [0, 1/4)")
        require(self.c_sub > 0.0 and self.c_meo > 0.0, "c_sub and c_meo must be positive")
        require(0.0 < self.delta < 1.0, "delta must lie in (0, 1)")
        require(int(self.max_outer) == self.max_outer and self.max_outer >= 0, "max_outer must be a nonnegative integer")

    @property
    def k_sub(self):
        return int(math.ceil(self.c_sub * self.eps_h**-0.5))

    def as_dict(self):
        return config_dict(self)


def _meo_step(ev, radius, cfg, manifold, rng, report, k, iters=0):
    x = ev.x
    out = meo_run(ev.hess_vec, ev.gradient, cfg.eps_h, cfg.delta, manifold.dim, rng, cfg.c_meo, lambda u: manifold.proj(x, u), ev.counters)
    if isinstance(out, Certified):
        cert = {"source": "meo", "lam_est": out.lam_est, "products": out.products}
        return SubproblemResult("terminate", iters=iters, certificate=cert)
    eta = radius * out.direction
    h_eta = radius * out.h_direction
    dec = unregularized_decrease(ev.gradient, eta, h_eta)
    if dec < 0.25 * cfg.eps_h * radius**2 * (1 - 1e-12):
        report.violate("meo_decrease", k, f"m(0)-m(eta)={dec:.3e} < eps_h Delta^2/4")
    return SubproblemResult("meo", eta, h_eta, iters=iters + out.products, on_boundary=True)


def rtr_subproblem(ev, radius, cfg, manifold, rng, report, k=0):
    """One call of the subproblem process; see the module docstring."""
    g = ev.gradient
    if ev.grad_norm <= cfg.eps_g:
        return _meo_step(ev, radius, cfg, manifold, rng, report, k)
    evb = ev.shifted(2.0 * cfg.eps_h)
    state = init_basis(g, project=lambda u: manifold.proj(ev.x, u), dim=manifold.dim)
    done = False
    xi1_norm = math.nan
    for _ in range(cfg.k_sub):
        lanczos_extend(state, evb.hess_vec)
        d, e = state.tridiagonal()
        sol = solve_reduced_tr(d, e, state.reduced_gradient(g), radius)
        xi = lift(state, sol.u)
        hb = state.apply_h(sol.u)
        xi_norm = float(np.linalg.norm(xi))
        if state.j == 1:
            xi1_norm = xi_norm
        # TC.1 on the model whose Hessian is H + 2 eps_h I
        res = float(np.linalg.norm(g + hb))
        if residual_ok(res, xi_norm, cfg.theta1) or xi_norm >= radius * (1.0 - BOUNDARY_RTOL) or state.breakdown:
            done = True
            break
    check_orthogonality(state, report, k)
    if not done:
        res = _meo_step(ev, radius, cfg, manifold, rng, report, k, iters=state.j)
        if res.kind == "terminate":
            report.warn("meo_contradiction", k, "oracle certified after the Krylov budget ran out")
            res.kind = "stalled"
        return res
    Mb = ModelAt(evb, TrQuad(cfg.eps_h, radius, shift_factor=0.0))
    _, cchange = cauchy_model_change(Mb, ev.grad_norm * state.products[0])
    if model_change(Mb, xi, hb) > cchange + tcc_slack(ev.value):
        report.violate("tcc", k, "Krylov step worse than the Cauchy point")
    if xi_norm < radius * (1.0 - BOUNDARY_RTOL) and ev.counters is not None:
        beta = ev.counters.hess_norm_max + 2.0 * cfg.eps_h
        if ev.grad_norm > beta * xi1_norm * (1 + 1e-10):
            report.warn("gradient_bound", k, f"||g||={ev.grad_norm:.3e} > beta ||xi_1||")
        if xi1_norm > xi_norm * (1 + 1e-10) + 1e-14:
            report.warn("first_subspace", k, f"||xi_1||={xi1_norm:.3e} > ||eta||={xi_norm:.3e}")
    return SubproblemResult(
        "krylov", xi, hb - 2.0 * cfg.eps_h * xi, iters=state.j, cauchy_change=cchange, xi1_norm=xi1_norm, on_boundary=sol.on_boundary
    )


def update_radius(radius, r, eta_norm, cfg):
    """(next radius, accepted): expand only on very successful boundary steps."""
    if r > 0.75 and eta_norm >= radius * (1.0 - BOUNDARY_RTOL):
        nxt = min(cfg.delta_max, cfg.kappa2 * radius)
    elif r < 0.25:
        nxt = cfg.kappa1 * radius
    else:
        nxt = radius
    return nxt, r >= cfg.rho


def rtr_solve(problem, x0, config=None, seed=0, callback=None):
    """Run RTR from ``x0`` and return a RunReport."""
    cfg = config if config is not None else RtrConfig()
    rng = np.random.default_rng(seed)
    counters, report, ev = start(problem, x0, "rtr", cfg, seed)
    manifold = problem.manifold
    radius = cfg.delta0
    status = "budget"
    for k in range(int(cfg.max_outer)):
        hv_before = counters.hess_vec_products
        res = rtr_subproblem(ev, radius, cfg, manifold, rng, report, k)
        cap = cfg.k_sub + meo_budget(cfg.eps_h, cfg.delta, manifold.dim, cfg.c_meo)
        if counters.hess_vec_products - hv_before > cap:
            report.violate("hv_budget", k, f"subproblem used {counters.hess_vec_products - hv_before} products, cap {cap}")
        if res.kind in ("terminate", "stalled"):
            report.certificate = res.certificate
            report.final_subproblem_products = counters.hess_vec_products - hv_before
            status = "converged" if res.kind == "terminate" else "stalled"
            break
        eta = res.eta
        n_eta = float(np.linalg.norm(eta))
        x_trial = manifold.retract(ev.x, eta, cfg.retraction)
        f_trial = value_at(problem, x_trial, counters)
        decrease = unregularized_decrease(ev.gradient, eta, res.h_eta)
        r = rho(ev.value, f_trial, decrease) if math.isfinite(f_trial) else -math.inf
        radius_next, success = update_radius(radius, r, n_eta, cfg)
        rec = IterRecord(
            k=k,
            f=float(ev.value),
            grad_norm=ev.grad_norm,
            reg=radius,
            reg_next=radius_next,
            eta_norm=n_eta,
            rho=float(r),
            success=bool(success),
            model_decrease=decrease,
            reg_term=0.25 * cfg.eps_h * n_eta**2,
            step_kind=res.kind,
            subproblem_iters=res.iters,
            hv_cumulative=counters.hess_vec_products,
            f_trial=float(f_trial),
        )
        report.records.append(rec)
        if decrease < rec.reg_term - 1e-10:
            report.violate("cauchy_decrease", k, f"m(0)-m(eta)={decrease:.3e} < eps_h||eta||^2/4")
        if success and ev.value - f_trial < cfg.rho * rec.reg_term - 1e-10:
            report.violate("rtr_decrease", k, "accepted decrease below rho eps_h ||eta||^2 / 4")
        if callback is not None:
            callback(rec)
        if success:
            ev = evaluate(problem, x_trial, counters, value=f_trial)
        radius = radius_next
        if radius < DELTA_STALL:
            status = "stalled"
            report.warn("stalled", k, f"Delta={radius:.3e}")
            break
    return finish(report, ev, counters, status)
