"""Minimal eigenvalue oracle.

Lanczos from a random tangent start either exposes a direction of curvature
at most -eps_h/2 (aligned against the gradient) or, after a bounded number of
products, certifies that no such curvature was found.
"""

import math
from dataclasses import dataclass

import numpy as np

from rarn.errors import ContractError
from rarn.krylov import init_basis, lanczos_extend, lift, tridiag_min_eig, tridiag_min_eigvec


@dataclass
class Certified:
    lam_est: float
    products: int


@dataclass
class NegativeCurvature:
    """Unit direction v with <v, g> <= 0 and <v, H v> <= -eps_h/2.

    ``h_direction`` is H v, assembled from the stored Lanczos products.
    """

    direction: np.ndarray
    rayleigh: float
    h_direction: np.ndarray
    products: int


def meo_budget(eps_h, delta, n, c_meo=4.0):
    """min(n, ceil(c_meo * eps_h^(-1/2) * log(n/delta)))."""
    return int(min(n, math.ceil(c_meo * eps_h**-0.5 * math.log(n / delta))))


def satisfies_tce(direction, h_direction, g, eps_h):
    nv2 = float(np.dot(direction, direction))
    return bool(np.dot(direction, g) <= 0.0 and np.dot(direction, h_direction) <= -0.5 * eps_h * nv2)


def meo_run(hess_vec, g, eps_h, delta, n, rng=None, c_meo=4.0, project=None, counters=None):
    """Certify H >= -eps_h I or return a negative-curvature direction.

    ``hess_vec`` should be the counted operator; ``n`` is the tangent-space
    dimension. The start vector is a uniform random unit tangent.
    """
    if not 0.0 < eps_h <= 1.0:
        raise ContractError("eps_h must lie in (0, 1]")
    if not 0.0 < delta < 1.0:
        raise ContractError("delta must lie in (0, 1)")
    if counters is not None:
        counters.meo_calls += 1
    g = np.asarray(g, dtype=float)
    budget = meo_budget(eps_h, delta, n, c_meo)
    # pure perturbation start: zero centre, unit random direction
    state = init_basis(np.zeros_like(g), perturb=True, rel_magnitude=1.0, rng=rng, eps_g=1.0, project=project, dim=n)
    threshold = -0.5 * eps_h
    while state.j < budget and not state.breakdown:
        lanczos_extend(state, hess_vec)
        d, e = state.tridiagonal()
        if tridiag_min_eig(d, e) > threshold:
            continue
        theta, u = tridiag_min_eigvec(d, e)
        v = lift(state, u)
        hv = state.apply_h(u)
        if np.dot(v, g) > 0.0:
            v, hv = -v, -hv
        nv = float(np.linalg.norm(v))
        v, hv = v / nv, hv / nv
        # re-verify on the lifted vector, never trust the reduced value alone
        if satisfies_tce(v, hv, g, eps_h):
            return NegativeCurvature(v, float(np.dot(v, hv)), hv, state.j)
    d, e = state.tridiagonal()
    return Certified(tridiag_min_eig(d, e), state.j)
