"""Objective oracles, operation counters and built-in test problems."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from rarn.errors import ContractError
from rarn.manifold import Euclidean, RetractionKind, Sphere


@dataclass
class Counters:
    """Running operation counts for one solver run.

    ``hess_norm_max`` is the running max of ||Hv||/||v|| over all counted
    products, used as an empirical stand-in for the Hessian norm bound.
    """

    func_evals: int = 0
    grad_evals: int = 0
    hess_vec_products: int = 0
    meo_calls: int = 0
    hess_norm_max: float = 0.0

    def as_dict(self):
        return {
            "func_evals": self.func_evals,
            "grad_evals": self.grad_evals,
            "hess_vec_products": self.hess_vec_products,
            "meo_calls": self.meo_calls,
            "hess_norm_max": self.hess_norm_max,
        }


@dataclass
class ObjectiveEval:
    """f, grad f and a Hessian-vector operator frozen at one point.

    ``shift`` adds ``shift * v`` to every product, which is how the
    regularized operators H + c*I are formed without touching the problem.
    """

    x: np.ndarray
    value: float
    gradient: np.ndarray
    hv: Callable[[np.ndarray], np.ndarray]
    counters: Optional[Counters] = None
    shift: float = 0.0
    grad_norm: float = field(init=False)

    def __post_init__(self):
        self.grad_norm = float(np.linalg.norm(self.gradient))

    def hess_vec(self, v):
        w = self.hv(v)
        if self.counters is not None:
            self.counters.hess_vec_products += 1
            nv = np.linalg.norm(v)
            if nv > 0:
                ratio = float(np.linalg.norm(w) / nv)
                if ratio > self.counters.hess_norm_max:
                    self.counters.hess_norm_max = ratio
        if self.shift:
            w = w + self.shift * v
        return w

    def hess_vec_uncounted(self, v):
        """Product for diagnostics only; does not touch the counters."""
        w = self.hv(v)
        return w + self.shift * v if self.shift else w

    def shifted(self, c):
        return ObjectiveEval(self.x, self.value, self.gradient, self.hv, self.counters, self.shift + c)


class Rayleigh:
    """f(x) = x^T A x on the unit sphere."""

    name = "rayleigh"

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractError("Rayleigh matrix must be square")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ContractError("Rayleigh matrix must be symmetric")
        self.A = 0.5 * (A + A.T)
        self.n = A.shape[0]
        self.manifold = Sphere(self.n)

    def value(self, x):
        return float(x @ self.A @ x)

    def gradient(self, x):
        Ax = self.A @ x
        return 2.0 * (Ax - np.dot(x, Ax) * x)

    def hess_vec(self, x, v):
        return self.hess_vec_fn(x)(v)

    def hess_vec_fn(self, x):
        Ax = self.A @ x
        fx = float(np.dot(x, Ax))

        def hv(v):
            # projected Euclidean Hessian plus the Weingarten term -(x^T egrad) v;
            # the input is projected first so rounding drift off the tangent
            # space is not amplified along x
            v = v - np.dot(x, v) * x
            Av = self.A @ v
            return 2.0 * (Av - np.dot(x, Av) * x) - 2.0 * fx * v

        return hv

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.A)[0])


class HolderWell:
    """f(x) = sum |x_i - a_i|^(2+mu)/(2+mu) + x^T B x / 2 on R^n.

    The Hessian diag((1+mu)|x - a|^mu) + B is only mu-Holder continuous where
    some coordinate meets the center.
    """

    name = "holderwell"

    def __init__(self, center, mu, B):
        B = np.asarray(B, dtype=float)
        center = np.asarray(center, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ContractError("B must be square")
        if center.shape != (B.shape[0],):
            raise ContractError("center and B dimensions differ")
        if not 0.0 < mu <= 1.0:
            raise ContractError("mu must lie in (0, 1]")
        if not np.allclose(B, B.T, rtol=0, atol=1e-12 * max(1.0, np.abs(B).max())):
            raise ContractError("B must be symmetric")
        B = 0.5 * (B + B.T)
        if np.linalg.eigvalsh(B)[0] >= 0.0:
            raise ContractError("B needs at least one negative eigenvalue")
        self.center = center
        self.mu = float(mu)
        self.B = B
        self.n = B.shape[0]
        self.manifold = Euclidean(self.n)

    def value(self, x):
        p = 2.0 + self.mu
        return float(np.sum(np.abs(x - self.center) ** p) / p + 0.5 * x @ self.B @ x)

    def gradient(self, x):
        d = x - self.center
        return np.sign(d) * np.abs(d) ** (1.0 + self.mu) + self.B @ x

    def hess_diag(self, x):
        return (1.0 + self.mu) * np.abs(x - self.center) ** self.mu

    def hess_vec(self, x, v):
        return self.hess_diag(x) * v + self.B @ v

    def hess_vec_fn(self, x):
        diag = self.hess_diag(x)
        B = self.B

        def hv(v):
            return diag * v + B @ v

        return hv

    def hessian(self, x):
        return np.diag(self.hess_diag(x)) + self.B


def _check_on_manifold(problem, x):
    try:
        return problem.manifold.check_point(x)
    except ContractError:
        raise ContractError(f"point does not lie on the {problem.manifold.name} manifold of {problem.name}") from None


def evaluate(problem, x, counters=None, value=None):
    """Value, gradient and Hessian-vector operator at ``x``.

    A ``value`` already computed at ``x`` is reused and not counted again.
    """
    x = _check_on_manifold(problem, x)
    if counters is not None:
        counters.func_evals += value is None
        counters.grad_evals += 1
    if value is None:
        value = problem.value(x)
    return ObjectiveEval(x, value, problem.gradient(x), problem.hess_vec_fn(x), counters)


def value_at(problem, x, counters=None):
    if counters is not None:
        counters.func_evals += 1
    return problem.value(x)


def _random_unit_tangents(manifold, x, count, rng):
    return [manifold.random_tangent(x, rng) for _ in range(count)]


def check_gradient_fd(problem, x, rng=None, n_dirs=10, h=1e-6):
    """Max relative error of <grad f, eta> against central differences of f(R_x(t eta))."""
    rng = np.random.default_rng(rng)
    M = problem.manifold
    x = _check_on_manifold(problem, x)
    g = problem.gradient(x)
    scale = max(float(np.linalg.norm(g)), 1e-300)
    worst = 0.0
    for eta in _random_unit_tangents(M, x, n_dirs, rng):
        fp = problem.value(M.retract(x, h * eta, RetractionKind.EXPONENTIAL))
        fm = problem.value(M.retract(x, -h * eta, RetractionKind.EXPONENTIAL))
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(fd - np.dot(g, eta)) / scale)
    return worst


def check_hessvec_fd(problem, x, rng=None, n_dirs=10, h=1e-5):
    """Max relative error of H eta against differences of transported gradients."""
    rng = np.random.default_rng(rng)
    M = problem.manifold
    x = _check_on_manifold(problem, x)
    worst = 0.0
    for eta in _random_unit_tangents(M, x, n_dirs, rng):
        yp = M.exp(x, h * eta)
        ym = M.exp(x, -h * eta)
        gp = M.transport(yp, x, problem.gradient(yp))
        gm = M.transport(ym, x, problem.gradient(ym))
        fd = (gp - gm) / (2.0 * h)
        hv = problem.hess_vec(x, eta)
        worst = max(worst, np.linalg.norm(fd - hv) / max(np.linalg.norm(hv), 1e-300))
    return float(worst)


def planted_rayleigh(spectrum, rng=None, rotate=True):
    """Rayleigh problem whose matrix has exactly the given spectrum."""
    spectrum = np.asarray(spectrum, dtype=float)
    if not rotate:
        return Rayleigh(np.diag(spectrum))
    rng = np.random.default_rng(rng)
    Q, R = np.linalg.qr(rng.standard_normal((spectrum.size, spectrum.size)))
    Q = Q * np.sign(np.diag(R))
    return Rayleigh((Q * spectrum) @ Q.T)
