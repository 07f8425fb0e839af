"""Lanczos tridiagonalization and the reduced subproblem solvers.

The basis is built with full reorthogonalization. Every product H q_i is
kept, so H applied to any vector of the subspace costs no further products.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, eigh_tridiagonal, eigvalsh_tridiagonal

from rarn._rootfind import increasing_root
from rarn.errors import DomainError

BREAKDOWN_TOL = 1e-12
HARD_CASE_TOL = 1e-12
SECULAR_TOL = 1e-10


@dataclass
class KrylovState:
    """Orthonormal Krylov basis and the tridiagonal projection T_j = Q_j^T H Q_j.

    ``j`` counts the columns of T known so far; ``basis`` may hold one more
    vector (the next Lanczos vector) than ``j``.
    """

    basis: List[np.ndarray]
    g_norm: float
    start_perturbed: bool
    dim: int
    alphas: List[float] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)
    products: List[np.ndarray] = field(default_factory=list)
    breakdown: bool = False
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def j(self):
        return len(self.alphas)

    def tridiagonal(self):
        j = self.j
        return np.array(self.alphas), np.array(self.betas[: max(j - 1, 0)])

    def dense_t(self):
        d, e = self.tridiagonal()
        return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)

    def q_matrix(self):
        return np.array(self.basis[: self.j])

    def reduced_gradient(self, g):
        """Q_j^T g; equals g_norm * e_1 for an unperturbed start."""
        if not self.start_perturbed:
            gt = np.zeros(self.j)
            gt[0] = self.g_norm
            return gt
        return self.q_matrix() @ g

    def apply_h(self, u):
        """H Q_j u from the stored products."""
        return np.asarray(u) @ np.array(self.products)


def init_basis(g, perturb=False, rel_magnitude=1e-6, rng=None, eps_g=0.0, project=None, dim=None):
    """Start a Lanczos process at g, or at g plus a small random tangent perturbation.

    ``project`` maps ambient vectors to the tangent space; when given, every
    new Lanczos vector is re-projected to stop rounding drift off the space.
    """
    g = np.asarray(g, dtype=float)
    g_norm = float(np.linalg.norm(g))
    dim = g.size if dim is None else int(dim)
    if perturb:
        rng = np.random.default_rng(rng)
        u = rng.standard_normal(g.size)
        if project is not None:
            u = project(u)
        u /= np.linalg.norm(u)
        start = g + rel_magnitude * max(g_norm, eps_g) * u
    else:
        if g_norm == 0.0:
            raise DomainError("cannot start an unperturbed Krylov basis at g = 0")
        start = g
    if project is not None:
        start = project(start)
    q0 = start / np.linalg.norm(start)
    return KrylovState([q0], g_norm, bool(perturb), dim, project=project)


def lanczos_extend(state, hess_vec):
    """Add one column to T_j using exactly one Hessian-vector product.

    On breakdown (invariant subspace or full dimension) the state is marked
    and later calls return it unchanged.
    """
    if state.breakdown:
        return state
    k = state.j
    q = state.basis[k]
    w = hess_vec(q)
    state.products.append(w)
    alpha = float(np.dot(q, w))
    r = w - alpha * q
    if k > 0:
        r -= state.betas[k - 1] * state.basis[k - 1]
    Q = np.array(state.basis)
    for _ in range(2):
        if state.project is not None:
            r = state.project(r)
        r -= Q.T @ (Q @ r)
    beta = float(np.linalg.norm(r))
    state.alphas.append(alpha)
    if beta <= BREAKDOWN_TOL * max(float(np.linalg.norm(w)), np.finfo(float).tiny) or len(state.basis) >= state.dim:
        state.breakdown = True
    else:
        state.basis.append(r / beta)
        state.betas.append(beta)
    return state


def lift(state, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (state.j,):
        raise ValueError(f"reduced vector has length {u.size}, subspace has dimension {state.j}")
    return u @ state.q_matrix()


def tridiag_min_eig(d, e):
    """Smallest eigenvalue by Sturm-sequence bisection (LAPACK stebz)."""
    if len(d) == 1:
        return float(d[0])
    return float(eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0), lapack_driver="stebz")[0])


def tridiag_min_eigvec(d, e):
    if len(d) == 1:
        return float(d[0]), np.ones(1)
    w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    return float(w[0]), v[:, 0]


@dataclass
class ReducedSolution:
    u: np.ndarray
    lam: float
    on_boundary: bool = False
    hard_case: bool = False
    theta_min: float = float("nan")


def secular_tolerance(lam, omega, theta_min):
    """Allowed |lam - sigma ||u||^omega| for a power-regularized solve.

    1e-10 (1 + lam), plus the first-order effect of rounding lam itself: with
    gap = lam + theta_min the norm ||u|| is only determined to about
    eps * lam / gap, which dominates when the root hugs -theta_min.
    """
    tol = SECULAR_TOL * (1.0 + lam)
    gap = lam + theta_min
    if gap > 0.0:
        tol += 8.0 * np.finfo(float).eps * omega * lam * lam / gap
    return tol


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input to reduced solver")


def _factor(d, e, shift):
    ab = np.zeros((2, len(d)))
    ab[0, 1:] = e
    ab[1] = d + shift
    return cholesky_banded(ab, lower=False, check_finite=False)


def _solve(c, rhs):
    return cho_solve_banded((c, False), rhs, check_finite=False)


def _secular(d, e, g, lam_lo, radius_fn, radius_log_slope):
    """Find lam > lam_lo with ||u(lam)|| = radius(lam), u = -(T + lam I)^{-1} g.

    Works in s = lam - lam_lo on the concave increasing function
    1/||u|| - 1/radius. ``radius_log_slope(lam)`` is radius'/radius.
    """
    scale = max(1.0, float(np.abs(d).max()), float(np.abs(e).max()) if len(e) else 0.0)

    def fun(s):
        lam = lam_lo + s
        try:
            c = _factor(d, e, lam)
        except LinAlgError:
            return -np.inf, 0.0
        u = -_solve(c, g)
        nu = float(np.linalg.norm(u))
        r = radius_fn(lam)
        if nu == 0.0:
            return np.inf, 0.0
        w = _solve(c, u)
        val = 1.0 / nu - 1.0 / r
        der = float(np.dot(u, w)) / nu**3 + radius_log_slope(lam) / r
        return val, der

    hi = scale
    while fun(hi)[0] < 0.0:
        hi *= 2.0
    s = increasing_root(fun, 0.0, hi, rtol=1e-15, atol=1e-300)
    lam = lam_lo + s
    try:
        return -_solve(_factor(d, e, lam), g), lam
    except LinAlgError:
        # root numerically on top of -lambda_min(T): redo it in eigen-coordinates,
        # where the shifted spectrum is exact near the bottom
        return _secular_eig(d, e, g, radius_fn, radius_log_slope)


def _secular_eig(d, e, g, radius_fn, radius_log_slope):
    theta, V = eigh_tridiagonal(d, e) if len(d) > 1 else (d.copy(), np.ones((1, 1)))
    c = V.T @ g
    lam_lo = max(0.0, -theta[0])
    base = theta - theta[0] if theta[0] < 0.0 else theta

    def fun(s):
        den = base + s
        if np.any((den <= 0.0) & (c != 0.0)):
            return -np.inf, 0.0
        w = np.divide(c, den, out=np.zeros_like(c), where=c != 0.0)
        nu = float(np.linalg.norm(w))
        if nu == 0.0:
            return np.inf, 0.0
        lam = lam_lo + s
        r = radius_fn(lam)
        der = float(np.sum(np.divide(c * c, den**3, out=np.zeros_like(c), where=c != 0.0))) / nu**3
        return 1.0 / nu - 1.0 / r, der + radius_log_slope(lam) / r

    hi = max(1.0, float(np.abs(theta).max()))
    while fun(hi)[0] < 0.0:
        hi *= 2.0
    s = increasing_root(fun, 0.0, hi, rtol=1e-15, atol=1e-300)
    if fun(s)[0] == -np.inf:
        s = np.nextafter(s, np.inf)
    den = base + s
    u = -(V @ np.divide(c, den, out=np.zeros_like(c), where=c != 0.0))
    return u, lam_lo + s


def _hard_case(d, e, g, theta_min, lam_lo, radius):
    """Split for the hard case, where g has no component along the bottom eigenspace.

    Returns ``(u_reg, v)`` with u_reg = -(T + lam_lo I)^+ g and v a unit
    bottom eigenvector oriented so that <v, g> <= 0, or None when the
    secular equation has a root right of lam_lo (easy case).
    """
    theta, V = eigh_tridiagonal(d, e) if len(d) > 1 else (d.copy(), np.ones((1, 1)))
    scale = max(1.0, float(np.abs(theta).max()))
    near = theta <= theta_min + 1e-10 * scale
    c = V.T @ g
    if np.linalg.norm(c[near]) > HARD_CASE_TOL * max(float(np.linalg.norm(g)), np.finfo(float).tiny):
        return None
    far = ~near
    u = -(V[:, far] @ (c[far] / (theta[far] + lam_lo)))
    if np.linalg.norm(u) > radius(lam_lo):
        return None
    v = V[:, np.flatnonzero(near)[0]]
    if np.dot(v, g) > 0:
        v = -v
    return u, v


def _complete(u, v, r):
    nu = float(np.linalg.norm(u))
    return u + np.sqrt(max(r * r - nu * nu, 0.0)) * v


def solve_reduced_ar(d, e, g, sigma, omega):
    """Global minimizer of <g,u> + u^T T u/2 + sigma/(2+omega) ||u||^(2+omega)."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    g = np.asarray(g, dtype=float)
    _check_finite(d, e, g, [sigma, omega])
    if not sigma > 0 or not 0 < omega <= 1:
        raise ValueError("need sigma > 0 and omega in (0, 1]")
    theta_min = tridiag_min_eig(d, e)
    lam_lo = max(0.0, -theta_min)

    def radius(lam):
        return (lam / sigma) ** (1.0 / omega)

    def log_slope(lam):
        return 1.0 / (omega * lam)

    if theta_min <= 0.0:
        split = _hard_case(d, e, g, theta_min, lam_lo, radius)
        if split is not None:
            return ReducedSolution(_complete(*split, radius(lam_lo)), lam_lo, hard_case=True, theta_min=theta_min)
    elif not np.any(g):
        return ReducedSolution(np.zeros_like(g), 0.0, theta_min=theta_min)
    u, lam = _secular(d, e, g, lam_lo, radius, log_slope)
    return ReducedSolution(u, lam, theta_min=theta_min)


def solve_reduced_tr(d, e, g, delta):
    """Global minimizer of <g,u> + u^T T u/2 subject to ||u|| <= delta."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    g = np.asarray(g, dtype=float)
    _check_finite(d, e, g, [delta])
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    theta_min = tridiag_min_eig(d, e)
    if theta_min > 0.0:
        try:
            u = -_solve(_factor(d, e, 0.0), g)
        except LinAlgError:
            u = None
        if u is not None and np.linalg.norm(u) <= delta:
            return ReducedSolution(u, 0.0)
    lam_lo = max(0.0, -theta_min)

    def radius(lam):
        return delta

    if theta_min <= 0.0:
        split = _hard_case(d, e, g, theta_min, lam_lo, radius)
        if split is not None:
            if lam_lo == 0.0:
                # singular PSD T: the null component is free, keep the interior point
                return ReducedSolution(split[0], 0.0, hard_case=True)
            return ReducedSolution(_complete(*split, delta), lam_lo, on_boundary=True, hard_case=True)
    u, lam = _secular(d, e, g, lam_lo, radius, lambda lam: 0.0)
    return ReducedSolution(u, lam, on_boundary=True)
