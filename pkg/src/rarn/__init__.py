"""Matrix-free Riemannian adaptive regularized Newton methods.

Two solvers share one framework: an adaptive 2+omega regularization method
(``rar_solve``) and a regularized trust-region method (``rtr_solve``). Both use
Lanczos-based Krylov subproblem solvers and a minimal eigenvalue oracle to
reach approximate second-order stationary points.
"""

from rarn.errors import ConfigError, ContractError, DomainError, RarnError
from rarn.manifold import Euclidean, Manifold, RetractionKind, Sphere
from rarn.objective import Counters, HolderWell, ObjectiveEval, Rayleigh, evaluate
from rarn.rar import RarConfig, rar_solve
from rarn.report import RunReport, verify_invariants
from rarn.rtr import RtrConfig, rtr_solve

__all__ = [
    "ConfigError",
    "ContractError",
    "Counters",
    "DomainError",
    "Euclidean",
    "HolderWell",
    "Manifold",
    "ObjectiveEval",
    "RarConfig",
    "RarnError",
    "Rayleigh",
    "RetractionKind",
    "RtrConfig",
    "RunReport",
    "Sphere",
    "evaluate",
    "rar_solve",
    "rtr_solve",
    "verify_invariants",
]

__version__ = "0.1.0"
