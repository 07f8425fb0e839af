"""Geometry for Euclidean space and the unit sphere.

Points and tangent vectors are plain 1-d numpy arrays in embedding
coordinates; the base point of a tangent vector is always passed explicitly.
Both manifolds carry the metric induced by the ambient dot product.
"""

import enum

import numpy as np

from rarn.errors import ContractError, DomainError

POINT_TOL = 1e-12
TANGENT_TOL = 1e-10


class RetractionKind(enum.Enum):
    EXPONENTIAL = "exponential"
    PROJECTION = "projection"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown retraction {value!r}") from None


class Manifold:
    """Interface shared by the concrete manifolds.

    Subclasses implement ``proj``, ``retract``, ``log_map``, ``transport`` and
    ``distance``; everything else is derived.
    """

    name = "manifold"

    def __init__(self, n):
        if n < 1:
            raise ValueError("ambient dimension must be positive")
        self.n = int(n)

    @property
    def dim(self):
        """Dimension of each tangent space."""
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.n == other.n

    def __hash__(self):
        return hash((type(self).__name__, self.n))

    def __repr__(self):
        return f"{type(self).__name__}({self.n})"

    def contains(self, x):
        raise NotImplementedError

    def is_tangent(self, x, u):
        raise NotImplementedError

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,) or not self.contains(x):
            raise ContractError(f"point is not on {self!r}")
        return x

    def check_tangent(self, x, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,) or not self.is_tangent(x, u):
            raise ContractError("vector is not tangent at the given base point")
        return u

    def inner(self, x, u, v):
        self.check_tangent(x, u)
        self.check_tangent(x, v)
        return float(np.dot(u, v))

    def norm(self, x, u):
        return float(np.linalg.norm(u))

    def proj(self, x, v):
        raise NotImplementedError

    def zero_vector(self, x):
        return np.zeros(self.n)

    def random_point(self, rng):
        raise NotImplementedError

    def random_tangent(self, x, rng):
        """Uniformly distributed unit tangent vector at ``x``."""
        u = self.proj(x, rng.standard_normal(self.n))
        return u / np.linalg.norm(u)

    def retract(self, x, eta, kind=RetractionKind.PROJECTION):
        raise NotImplementedError

    def exp(self, x, eta):
        return self.retract(x, eta, RetractionKind.EXPONENTIAL)

    def log_map(self, x, y):
        raise NotImplementedError

    def transport(self, x, y, v):
        raise NotImplementedError

    def distance(self, x, y):
        raise NotImplementedError


class Euclidean(Manifold):
    name = "euclidean"

    @property
    def dim(self):
        return self.n

    def contains(self, x):
        return bool(np.all(np.isfinite(x)))

    def is_tangent(self, x, u):
        return bool(np.all(np.isfinite(u)))

    def proj(self, x, v):
        return np.asarray(v, dtype=float).copy()

    def random_point(self, rng):
        return rng.standard_normal(self.n)

    def retract(self, x, eta, kind=RetractionKind.PROJECTION):
        return x + eta

    def log_map(self, x, y):
        return y - x

    def transport(self, x, y, v):
        return np.array(v, dtype=float)

    def distance(self, x, y):
        return float(np.linalg.norm(y - x))


class Sphere(Manifold):
    """Unit sphere S^{n-1} embedded in R^n."""

    name = "sphere"

    def __init__(self, n):
        if n < 2:
            raise ValueError("sphere needs ambient dimension >= 2")
        super().__init__(n)

    @property
    def dim(self):
        return self.n - 1

    def contains(self, x):
        return bool(np.all(np.isfinite(x))) and abs(np.linalg.norm(x) - 1.0) <= POINT_TOL

    def is_tangent(self, x, u):
        scale = max(1.0, float(np.linalg.norm(u)))
        return bool(np.all(np.isfinite(u))) and abs(np.dot(x, u)) <= TANGENT_TOL * scale

    def proj(self, x, v):
        v = np.asarray(v, dtype=float)
        return v - np.dot(x, v) * x

    def random_point(self, rng):
        x = rng.standard_normal(self.n)
        return x / np.linalg.norm(x)

    def retract(self, x, eta, kind=RetractionKind.PROJECTION):
        kind = RetractionKind.parse(kind)
        if kind is RetractionKind.EXPONENTIAL:
            t = np.linalg.norm(eta)
            if t == 0.0:
                return x.copy()
            y = np.cos(t) * x + np.sin(t) * (eta / t)
        else:
            y = x + eta
        return y / np.linalg.norm(y)

    def _check_not_antipodal(self, x, y):
        if np.dot(x, y) <= -1.0 + 1e-12:
            raise DomainError("antipodal points: log map and transport are undefined")

    def log_map(self, x, y):
        self._check_not_antipodal(x, y)
        v = y - np.dot(x, y) * x
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros(self.n)
        return v * (self.distance(x, y) / nv)

    def transport(self, x, y, v):
        # rotation in the plane spanned by x and the geodesic direction
        u = self.log_map(x, y)
        theta = np.linalg.norm(u)
        if theta == 0.0:
            return np.array(v, dtype=float)
        u = u / theta
        c = np.dot(u, v)
        return v + (np.cos(theta) - 1.0) * c * u - np.sin(theta) * c * x

    def distance(self, x, y):
        # 2 asin(|x-y|/2) == arccos(<x,y>) on the sphere, without the
        # cancellation arccos suffers for nearby points
        chord = min(np.linalg.norm(x - y) / 2.0, 1.0)
        return float(2.0 * np.arcsin(chord))
