"""Riemannian adaptive 2+omega regularization (RAR).

Each outer iteration builds the model f + <g,eta> + <eta,H eta>/2 +
sigma/(2+omega) ||eta||^(2+omega) and approximately minimizes it on a
perturbed Krylov subspace. The step is accepted when the actual decrease is
a large enough fraction of the predicted one, and sigma adapts to the ratio.
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
from rarn.krylov import init_basis, lanczos_extend, lift, secular_tolerance, solve_reduced_ar, tridiag_min_eig
from rarn.manifold import RetractionKind
from rarn.meo import Certified, meo_budget, meo_run
from rarn.model import (
    ArPower,
    ModelAt,
    cauchy_model_change,
    model_change,
    model_grad,
    residual_ok,
    rho,
    tcc_slack,
    tcd_threshold,
    unregularized_decrease,
)
from rarn.objective import evaluate, value_at
from rarn.report import IterRecord, step_bound

SIGMA_STALL = 1e30


@dataclass(frozen=True)
class RarConfig:
    """Parameters of the RAR method. theta1, theta2 and tcd_alpha default to omega."""

    eps_g: float = 1e-5
    eps_h: float = 1e-3
    omega: float = 1.0
    theta1: Optional[float] = None
    theta2: Optional[float] = None
    kappa1: float = 0.5
    kappa2: float = 2.0
    kappa3: float = 4.0
    sigma_lower: float = 1e-4
    sigma0: float = 1.0
    rho1: float = 0.1
    rho2: float = 0.9
    c_sub: float = 50.0
    delta: float = 0.05
    c_meo: float = 4.0
    perturb: float = 1e-6
    tcd_alpha: Optional[float] = None
    max_outer: int = 10000
    retraction: RetractionKind = RetractionKind.PROJECTION

    def __post_init__(self):
        for name in ("theta1", "theta2", "tcd_alpha"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, self.omega)
        object.__setattr__(self, "retraction", parse_retraction(self.retraction))
        for name in ("eps_g", "eps_h", "omega", "theta1", "theta2", "tcd_alpha"):
            v = getattr(self, name)
            require(0.0 < v <= 1.0, f"{name} must lie in (0, 1], got {v}")
        require(self.kappa3 > self.kappa2 >= 1.0 > self.kappa1 > 0.0, "need kappa3 > kappa2 >= 1 > kappa1 > 0")
        require(self.sigma_lower > 0.0, "sigma_lower must be positive")
        require(self.sigma0 >= self.sigma_lower, "sigma0 must be >= sigma_lower")
        require(1.0 > self.rho2 >= self.rho1 > 0.0, "need 1 > rho2 >= rho1 > 0")
        require(self.c_sub > 0.0 and self.c_meo > 0.0, "c_sub and c_meo must be positive")
        require(0.0 < self.delta < 1.0, "delta must lie in (0, 1)")
        require(self.perturb > 0.0, "perturb must be positive")
        require(int(self.max_outer) == self.max_outer and self.max_outer >= 0, "max_outer must be a nonnegative integer")

    @property
    def k_sub(self):
        return int(math.ceil(self.c_sub * self.eps_h**-0.5))

    def as_dict(self):
        return config_dict(self)


def _check_secular(sol, sigma, omega, report, k):
    res = abs(sol.lam - sigma * float(np.linalg.norm(sol.u)) ** omega)
    if res > secular_tolerance(sol.lam, omega, sol.theta_min):
        report.violate("secular_residual", k, f"|lam - sigma||u||^w| = {res:.2e}")


def _cauchy_reference(M, zeta):
    """Cauchy model change and the TC.C slack for a perturbed basis.

    The perturbed start tilts the subspace away from g by an angle of at most
    zeta/||g||, so the subspace may miss the Cauchy value by about
    (curvature * ||eta_C||^2) times that angle; the slack allows for it.
    """
    ev = M.eval
    if ev.grad_norm == 0.0:
        return 0.0, tcc_slack(ev.value)
    h_g = ev.hess_vec(ev.gradient)
    eta_c, change = cauchy_model_change(M, h_g)
    nc = float(np.linalg.norm(eta_c))
    curv = float(np.linalg.norm(h_g)) / ev.grad_norm + (1.0 + M.reg.omega) * M.reg.grad_coeff(nc)
    slack = tcc_slack(ev.value) + 2.0 * curv * nc**2 * min(1.0, zeta / ev.grad_norm)
    return change, slack


def _recalculate(ev, sigma, cfg, manifold, report, k):
    """Krylov solve with H + 2 eps_h I and TC.1, from the unperturbed basis."""
    g = ev.gradient
    evb = ev.shifted(2.0 * cfg.eps_h)
    Mb = ModelAt(evb, ArPower(sigma, cfg.omega))
    state = init_basis(g, project=lambda u: manifold.proj(ev.x, u), dim=manifold.dim)
    met = False
    for _ in range(cfg.k_sub):
        lanczos_extend(state, evb.hess_vec)
        d, e = state.tridiagonal()
        sol = solve_reduced_ar(d, e, state.reduced_gradient(g), sigma, cfg.omega)
        _check_secular(sol, sigma, cfg.omega, report, k)
        xi = lift(state, sol.u)
        hb = state.apply_h(sol.u)
        if residual_ok(float(np.linalg.norm(model_grad(Mb, xi, hb))), float(np.linalg.norm(xi)), cfg.theta1):
            met = True
            break
        if state.breakdown:
            break
    check_orthogonality(state, report, k)
    if not met:
        report.warn("recalc_tc1", k, f"TC.1 not met after {state.j} Lanczos steps")
    # q0 = g/||g||, so Hbar g is the first stored product scaled by ||g||
    h_g = ev.grad_norm * state.products[0]
    _, cchange = cauchy_model_change(Mb, h_g)
    if model_change(Mb, xi, hb) > cchange + tcc_slack(ev.value):
        report.violate("tcc", k, "recalculated step worse than the Cauchy point of the shifted model")
    return SubproblemResult("recalc", xi, hb - 2.0 * cfg.eps_h * xi, iters=state.j, cauchy_change=cchange)


def rar_subproblem(ev, sigma, sigma_bar, cfg, manifold, rng, report, k=0):
    """One call of the subproblem process.

    Grows a perturbed Krylov subspace until the step meets TC.1 (only while
    ||g|| > eps_g) or TC.D, together with TC.C. If K_sub steps pass without
    that, the Hessian is taken as nearly PSD: when ||g|| > eps_g the step is
    recomputed with H + 2 eps_h I. With ||g|| <= eps_g termination always goes
    through the eigenvalue oracle, whose certificate is what the run reports.
    """
    g = ev.gradient
    gnorm = ev.grad_norm
    first_order = gnorm > cfg.eps_g
    M = ModelAt(ev, ArPower(sigma, cfg.omega))
    threshold = tcd_threshold(cfg.tcd_alpha, cfg.eps_h, sigma_bar)
    x = ev.x

    def project(u):
        return manifold.proj(x, u)

    hv_start = ev.counters.hess_vec_products if ev.counters else 0
    state = init_basis(g, perturb=True, rel_magnitude=cfg.perturb, rng=rng, eps_g=cfg.eps_g, project=project, dim=manifold.dim)
    zeta = cfg.perturb * max(gnorm, cfg.eps_g)
    cauchy = None
    max_flag = True
    xi = h_xi = None
    xi1_norm = math.nan
    for _ in range(cfg.k_sub):
        lanczos_extend(state, ev.hess_vec)
        d, e = state.tridiagonal()
        sol = solve_reduced_ar(d, e, state.reduced_gradient(g), sigma, cfg.omega)
        _check_secular(sol, sigma, cfg.omega, report, k)
        xi = lift(state, sol.u)
        h_xi = state.apply_h(sol.u)
        xi_norm = float(np.linalg.norm(xi))
        if state.j == 1:
            xi1_norm = xi_norm
        tc1 = first_order and residual_ok(float(np.linalg.norm(model_grad(M, xi, h_xi))), xi_norm, cfg.theta1)
        if tc1 or unregularized_decrease(g, xi, h_xi) >= threshold:
            if cauchy is None:
                cauchy = _cauchy_reference(M, zeta)
            if model_change(M, xi, h_xi) <= cauchy[0] + cauchy[1]:
                max_flag = False
                break
        if state.breakdown:
            break
    check_orthogonality(state, report, k)
    cchange = None if cauchy is None else cauchy[0]

    lam_t = None
    if max_flag:
        d, e = state.tridiagonal()
        lam_t = tridiag_min_eig(d, e)
        if first_order:
            res = _recalculate(ev, sigma, cfg, manifold, report, k)
            res.xi1_norm = xi1_norm
            return _budget_check(res, ev, hv_start, cfg, manifold, report, k)
        if lam_t < -cfg.eps_h:
            report.warn("krylov_certificate", k, f"lambda_min(T)={lam_t:.3e} < -eps_h without a TC.D step")

    if not first_order:
        # termination always rests on the oracle; the Krylov estimate is kept for reference
        out = meo_run(ev.hess_vec, g, cfg.eps_h, cfg.delta, manifold.dim, rng, cfg.c_meo, project, ev.counters)
        if isinstance(out, Certified):
            cert = {"source": "meo", "lam_est": out.lam_est, "products": out.products, "krylov_lam_est": lam_t}
            return _budget_check(SubproblemResult("terminate", iters=state.j, certificate=cert), ev, hv_start, cfg, manifold, report, k)
    if max_flag:
        if cauchy is None:
            cauchy = _cauchy_reference(M, zeta)
            cchange = cauchy[0]
        if model_change(M, xi, h_xi) > cauchy[0] + cauchy[1]:
            report.violate("tcc", k, "returned step worse than the Cauchy point")
    res = SubproblemResult("krylov", xi, h_xi, iters=state.j, cauchy_change=cchange, xi1_norm=xi1_norm)
    return _budget_check(res, ev, hv_start, cfg, manifold, report, k)


def _budget_check(res, ev, hv_start, cfg, manifold, report, k):
    if ev.counters is not None:
        used = ev.counters.hess_vec_products - hv_start
        cap = 2 * cfg.k_sub + 1 + meo_budget(cfg.eps_h, cfg.delta, manifold.dim, cfg.c_meo)
        if used > cap:
            report.violate("hv_budget", k, f"subproblem used {used} products, cap {cap}")
    return res


def _soft_checks(ev, sigma, res, cfg, report, k):
    beta = ev.counters.hess_norm_max if ev.counters else 0.0
    gnorm = ev.grad_norm
    n_eta = float(np.linalg.norm(res.eta))
    w = cfg.omega
    if res.kind != "recalc" and n_eta > step_bound(gnorm, sigma, w, beta) * (1 + 1e-10):
        report.warn("step_bound", k, f"||eta||={n_eta:.3e}")
    b = beta + (2.0 * cfg.eps_h if res.kind == "recalc" else 0.0)
    if gnorm > (b * n_eta + sigma * n_eta ** (1.0 + w)) * (1 + 1e-10) + 1e-14:
        report.warn("gradient_bound", k, f"||g||={gnorm:.3e} exceeds beta||eta|| + ||grad phi||")
    if res.cauchy_change is not None and gnorm > 0 and beta > 0:
        need = gnorm**2 / (4.0 * max(beta, sigma ** (1.0 / (1.0 + w)) * gnorm ** (w / (1.0 + w))))
        if -res.cauchy_change < need * (1 - 1e-10):
            report.warn("cauchy_lower_bound", k, f"Cauchy decrease {-res.cauchy_change:.3e} < {need:.3e}")
    if res.xi1_norm > n_eta * (1 + 1e-10) + 1e-14:
        report.warn("first_subspace", k, f"||xi_1||={res.xi1_norm:.3e} > ||eta||={n_eta:.3e}")


def update_sigma(sigma, r, cfg):
    """(next sigma, accepted) from the ratio r, using the interval endpoints."""
    if r > cfg.rho2:
        return max(cfg.sigma_lower, cfg.kappa1 * sigma), True
    if r >= cfg.rho1:
        return sigma, True
    return cfg.kappa2 * sigma, False


def rar_solve(problem, x0, config=None, seed=0, callback=None):
    """Run RAR from ``x0`` and return a RunReport.

    ``callback(record)`` is called after every outer iteration.
    """
    cfg = config if config is not None else RarConfig()
    rng = np.random.default_rng(seed)
    counters, report, ev = start(problem, x0, "rar", cfg, seed)
    manifold = problem.manifold
    sigma = cfg.sigma0
    sigma_bar = sigma
    status = "budget"
    for k in range(int(cfg.max_outer)):
        hv_before = counters.hess_vec_products
        res = rar_subproblem(ev, sigma, sigma_bar, cfg, manifold, rng, report, k)
        if res.kind == "terminate":
            report.certificate = res.certificate
            report.final_subproblem_products = counters.hess_vec_products - hv_before
            status = "converged"
            break
        eta = res.eta
        n_eta = float(np.linalg.norm(eta))
        x_trial = manifold.retract(ev.x, eta, cfg.retraction)
        f_trial = value_at(problem, x_trial, counters)
        decrease = unregularized_decrease(ev.gradient, eta, res.h_eta)
        r = rho(ev.value, f_trial, decrease) if math.isfinite(f_trial) else -math.inf
        sigma_next, success = update_sigma(sigma, r, cfg)
        phi = ArPower(sigma, cfg.omega).value(n_eta)
        rec = IterRecord(
            k=k,
            f=float(ev.value),
            grad_norm=ev.grad_norm,
            reg=sigma,
            reg_next=sigma_next,
            eta_norm=n_eta,
            rho=float(r),
            success=bool(success),
            model_decrease=decrease,
            reg_term=phi,
            step_kind=res.kind,
            subproblem_iters=res.iters,
            hv_cumulative=counters.hess_vec_products,
            f_trial=float(f_trial),
        )
        report.records.append(rec)
        _soft_checks(ev, sigma, res, cfg, report, k)
        if decrease < phi - 1e-10:
            report.violate("cauchy_decrease", k, f"m(0)-m(eta)={decrease:.3e} < phi={phi:.3e}")
        if callback is not None:
            callback(rec)
        if success:
            ev = evaluate(problem, x_trial, counters, value=f_trial)
        sigma = sigma_next
        sigma_bar = max(sigma_bar, sigma)
        if sigma > SIGMA_STALL:
            status = "stalled"
            report.warn("stalled", k, f"sigma={sigma:.3e}")
            break
    report.max_sigma = sigma_bar
    return finish(report, ev, counters, status)
