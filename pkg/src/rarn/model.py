"""Regularized Newton models, Cauchy points and subproblem termination tests.

A model is the second-order Taylor expansion m(eta) = f + <g, eta> +
<eta, H eta>/2 plus a regularizer phi with phi(0) = 0. Functions that need
H eta accept it precomputed through ``h_eta`` so Krylov solvers can reuse
their stored products; otherwise exactly one product is spent.
"""

from dataclasses import dataclass

import numpy as np

from rarn._rootfind import increasing_root
from rarn.errors import ContractError, DomainError
from rarn.objective import ObjectiveEval

TR_RADIUS_SLACK = 1e-12


@dataclass(frozen=True)
class ArPower:
    """phi(eta) = sigma/(2+omega) ||eta||^(2+omega)."""

    sigma: float
    omega: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractError("sigma must be positive")
        if not 0.0 < self.omega <= 1.0:
            raise ContractError("omega must lie in (0, 1]")

    def value(self, norm):
        return self.sigma / (2.0 + self.omega) * norm ** (2.0 + self.omega)

    def grad_coeff(self, norm):
        """grad phi(eta) = grad_coeff(||eta||) * eta."""
        return self.sigma * norm**self.omega

    def hess_min(self, norm):
        # Hess phi = sigma ||eta||^w (I + w eta eta^T/||eta||^2)
        return self.sigma * norm**self.omega


@dataclass(frozen=True)
class TrQuad:
    """Quadratic regularizer inside a trust region of radius ``delta``.

    phi(eta) = shift_factor * eps_h ||eta||^2 / 2, i.e. the model Hessian is
    H + shift_factor * eps_h * I. The default 1/2 gives eps_h ||eta||^2 / 4.
    """

    eps_h: float
    delta: float
    shift_factor: float = 0.5

    def __post_init__(self):
        if not self.eps_h > 0 or not self.delta > 0:
            raise ContractError("eps_h and delta must be positive")

    @property
    def shift(self):
        return self.shift_factor * self.eps_h

    def value(self, norm):
        return 0.5 * self.shift * norm**2

    def grad_coeff(self, norm):
        return self.shift

    def hess_min(self, norm):
        return self.shift


@dataclass
class ModelAt:
    eval: ObjectiveEval
    reg: object


@dataclass(frozen=True)
class TerminationParams:
    theta1: float
    theta2: float
    eps_g: float
    eps_h: float
    tcd_threshold: float = 0.0

    def __post_init__(self):
        for name in ("theta1", "theta2", "eps_g", "eps_h"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ContractError(f"{name} must lie in (0, 1]")
        if self.tcd_threshold < 0:
            raise ContractError("tcd_threshold must be nonnegative")


def _h(M, eta, h_eta):
    return M.eval.hess_vec(eta) if h_eta is None else h_eta


def _check_radius(M, norm):
    if isinstance(M.reg, TrQuad) and norm > M.reg.delta * (1.0 + TR_RADIUS_SLACK):
        raise DomainError("step lies outside the trust region")


def model_change(M, eta, h_eta=None):
    """Regularized model value minus f, i.e. mbar(eta) - mbar(0)."""
    norm = float(np.linalg.norm(eta))
    _check_radius(M, norm)
    h_eta = _h(M, eta, h_eta)
    return float(np.dot(eta, M.eval.gradient) + 0.5 * np.dot(eta, h_eta) + M.reg.value(norm))


def model_value(M, eta, h_eta=None):
    return M.eval.value + model_change(M, eta, h_eta)


def unregularized_decrease(g, eta, h_eta):
    """m(0) - m(eta) for the plain quadratic model."""
    return float(-np.dot(g, eta) - 0.5 * np.dot(eta, h_eta))


def model_grad(M, eta, h_eta=None):
    h_eta = _h(M, eta, h_eta)
    return M.eval.gradient + h_eta + M.reg.grad_coeff(float(np.linalg.norm(eta))) * eta


def _ar_cauchy_length(gnorm, curv, sigma, omega):
    # step length s = tau*||g|| solves sigma s^(1+w) + curv s - ||g|| = 0,
    # with curv = <g,Hg>/||g||^2; the left side starts at -||g|| and has a
    # single positive root whatever the sign of curv
    def fun(s):
        return sigma * s ** (1.0 + omega) + curv * s - gnorm, sigma * (1.0 + omega) * s**omega + curv

    hi = (gnorm / sigma) ** (1.0 / (1.0 + omega))
    while fun(hi)[0] <= 0.0:
        hi *= 2.0
    return increasing_root(fun, 0.0, hi, rtol=1e-15)


def cauchy_point(M, h_g=None):
    """Minimizer of the regularized model along span{g} (within the radius for TrQuad)."""
    g = M.eval.gradient
    gnorm = M.eval.grad_norm
    if gnorm == 0.0:
        return np.zeros_like(g)
    h_g = _h(M, g, h_g)
    curv = float(np.dot(g, h_g)) / gnorm**2
    reg = M.reg
    if isinstance(reg, ArPower):
        s = _ar_cauchy_length(gnorm, curv, reg.sigma, reg.omega)
    elif isinstance(reg, TrQuad):
        curv_bar = curv + reg.shift
        s = reg.delta if curv_bar <= 0 else min(gnorm / curv_bar, reg.delta)
    else:
        raise ContractError(f"unsupported regularizer {reg!r}")
    return -(s / gnorm) * g


def rho(f_x, f_next, model_decrease):
    """Actual over predicted decrease; -inf when the prediction is not positive."""
    if not model_decrease > 0:
        return -np.inf
    return (f_x - f_next) / model_decrease


def check_tc1(M, eta, params, h_eta=None):
    norm = float(np.linalg.norm(eta))
    if norm == 0.0:
        return False
    r = np.linalg.norm(model_grad(M, eta, h_eta))
    return bool(r <= norm ** (1.0 + params.theta1))


def residual_ok(residual_norm, eta_norm, theta1):
    """TC.1 on precomputed norms."""
    return eta_norm > 0.0 and residual_norm <= eta_norm ** (1.0 + theta1)


def check_tc2(M, eta, params, lambda_min_estimate):
    norm = float(np.linalg.norm(eta))
    return bool(lambda_min_estimate + M.reg.hess_min(norm) >= -(norm**params.theta2))


def tcc_slack(f):
    return 1e-12 * max(1.0, abs(f))


def check_tcc(M, eta, h_eta=None, cauchy_change=None, h_g=None):
    """mbar(eta) <= mbar(eta_C) up to a tiny f-scaled slack.

    ``cauchy_change`` is mbar(eta_C) - f if already known.
    """
    if cauchy_change is None:
        _, cauchy_change = cauchy_model_change(M, h_g)
    return bool(model_change(M, eta, h_eta) <= cauchy_change + tcc_slack(M.eval.value))


def cauchy_model_change(M, h_g=None):
    """(eta_C, mbar(eta_C) - f) with at most one Hessian product."""
    g = M.eval.gradient
    if M.eval.grad_norm == 0.0:
        return np.zeros_like(g), 0.0
    h_g = _h(M, g, h_g)
    ec = cauchy_point(M, h_g)
    # eta_C = -t g, so H eta_C = -t H g
    t = float(np.linalg.norm(ec)) / M.eval.grad_norm
    return ec, model_change(M, ec, -t * h_g)


def tcd_threshold(alpha, eps_h, sigma_bar):
    """Minimum unregularized model decrease alpha eps_h^((2+a)/a) / (12 sigma_bar^(2/a))."""
    return alpha * eps_h ** ((2.0 + alpha) / alpha) / (12.0 * sigma_bar ** (2.0 / alpha))


def check_tcd(M, eta, params, h_eta=None):
    if not isinstance(M.reg, ArPower):
        raise ContractError("TC.D applies to the power-regularized model only")
    h_eta = _h(M, eta, h_eta)
    return bool(unregularized_decrease(M.eval.gradient, eta, h_eta) >= params.tcd_threshold)
