"""Independent reference solvers used by the tests.

They work on a dense symmetric matrix through numpy's eigendecomposition and
scipy's brentq, sharing no code with the package's banded solvers.
"""

import numpy as np
from scipy.optimize import brentq


def dense(d, e):
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


def ar_value(T, g, u, sigma, omega):
    return float(g @ u + 0.5 * u @ T @ u + sigma / (2 + omega) * np.linalg.norm(u) ** (2 + omega))


def tr_value(T, g, u):
    return float(g @ u + 0.5 * u @ T @ u)


def _u_of(lam, w, V, c, mask):
    return -(V[:, mask] @ (c[mask] / (w[mask] + lam)))


def dense_ar(T, g, sigma, omega, tol=1e-12):
    """(u, lam) minimizing <g,u> + u^T T u/2 + sigma/(2+omega) ||u||^(2+omega)."""
    w, V = np.linalg.eigh(T)
    c = V.T @ g
    lam_lo = max(0.0, -w[0])
    near = np.abs(w - w[0]) <= 1e-10 * max(1.0, np.abs(w).max())
    full = np.ones_like(w, dtype=bool)

    def psi(lam):
        return np.linalg.norm(_u_of(lam, w, V, c, full)) - (lam / sigma) ** (1 / omega)

    if not np.any(g) and w[0] > 0:
        return np.zeros_like(g), 0.0
    lo = lam_lo + 1e-300 if lam_lo == 0 else np.nextafter(lam_lo, np.inf)
    degenerate = np.linalg.norm(c[near]) <= tol * max(np.linalg.norm(g), 1e-300)
    if w[0] <= 0 and (degenerate or not psi(lo) > 0):
        # hard case: no root right of lam_lo, complete along the bottom eigenvector
        u = _u_of(lam_lo, w, V, c, ~near)
        r = (lam_lo / sigma) ** (1 / omega)
        return u + np.sqrt(max(r * r - u @ u, 0.0)) * V[:, 0], lam_lo
    hi = max(1.0, 2 * lam_lo)
    while psi(hi) > 0:
        hi *= 2
    lam = brentq(psi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _u_of(lam, w, V, c, full), lam


def dense_tr(T, g, delta, tol=1e-12):
    """(u, lam) minimizing <g,u> + u^T T u/2 subject to ||u|| <= delta."""
    w, V = np.linalg.eigh(T)
    c = V.T @ g
    full = np.ones_like(w, dtype=bool)
    if w[0] > 0:
        u = _u_of(0.0, w, V, c, full)
        if np.linalg.norm(u) <= delta:
            return u, 0.0
    lam_lo = max(0.0, -w[0])
    near = np.abs(w - w[0]) <= 1e-10 * max(1.0, np.abs(w).max())

    def psi(lam):
        return np.linalg.norm(_u_of(lam, w, V, c, full)) - delta

    lo = np.nextafter(lam_lo, np.inf) if lam_lo > 0 else 1e-300
    degenerate = np.linalg.norm(c[near]) <= tol * max(np.linalg.norm(g), 1e-300)
    if degenerate or not psi(lo) > 0:
        u = _u_of(lam_lo, w, V, c, ~near)
        if lam_lo == 0.0:
            return u, 0.0
        return u + np.sqrt(max(delta**2 - u @ u, 0.0)) * V[:, 0], lam_lo
    hi = max(1.0, 2 * lam_lo)
    while psi(hi) > 0:
        hi *= 2
    lam = brentq(psi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _u_of(lam, w, V, c, full), lam


def random_tridiagonal(rng, n, scale=2.0):
    return rng.uniform(-scale, scale, n), rng.uniform(-scale, scale, n - 1)


def hard_case_instance(rng, n, kind):
    """Tridiagonal T with lambda_min < 0 and g orthogonal to the bottom eigenvector.

    ``kind`` is "ar" or "tr"; the returned parameter (sigma or delta) makes the
    instance a genuine hard case, i.e. the completion step is needed.
    """
    d, e = random_tridiagonal(rng, n)
    T = dense(d, e)
    w, V = np.linalg.eigh(T)
    if w[0] >= -0.1:
        d = d - (w[0] + rng.uniform(0.2, 1.0))
        T = dense(d, e)
        w, V = np.linalg.eigh(T)
    r = rng.standard_normal(n)
    g = r - (V[:, 0] @ r) * V[:, 0]
    g *= rng.uniform(0.01, 0.5)
    lam_lo = -w[0]
    c = V.T @ g
    u_norm = np.linalg.norm(c[1:] / (w[1:] + lam_lo))
    if kind == "tr":
        return d, e, g, u_norm * rng.uniform(1.5, 4.0)
    omega = rng.uniform(0.3, 1.0)
    # need ||u(lam_lo)|| < (lam_lo/sigma)^(1/omega)
    sigma = lam_lo / (u_norm * rng.uniform(1.5, 4.0)) ** omega
    return d, e, g, (sigma, omega)
