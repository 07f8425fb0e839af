import numpy as np
import pytest

from rarn.errors import ContractError
from rarn.manifold import Euclidean
from rarn.objective import (
    Counters,
    HolderWell,
    Rayleigh,
    check_gradient_fd,
    check_hessvec_fd,
    evaluate,
    planted_rayleigh,
    value_at,
)


def test_rayleigh_examples():
    p = Rayleigh(np.diag([1.0, 2.0]))
    ev = evaluate(p, np.array([1.0, 0.0]))
    assert ev.value == 1.0 and ev.grad_norm == 0.0
    ev = evaluate(p, np.array([1.0, 1.0]) / np.sqrt(2))
    assert ev.value == pytest.approx(1.5)
    assert ev.grad_norm == pytest.approx(1.0)


def test_holderwell_example():
    p = HolderWell(np.zeros(2), 1.0, np.diag([-1e-300, 0.0]))
    ev = evaluate(p, np.array([1.0, 0.0]))
    assert ev.value == pytest.approx(1.0 / 3.0)
    np.testing.assert_allclose(ev.gradient, [1.0, 0.0])


def test_wrong_manifold_rejected():
    with pytest.raises(ContractError):
        evaluate(Rayleigh(np.eye(3)), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ContractError):
        evaluate(Rayleigh(np.eye(3)), np.ones(2))


def test_problem_validation():
    with pytest.raises(ContractError):
        Rayleigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ContractError):
        HolderWell(np.zeros(2), 0.5, np.eye(2))
    with pytest.raises(ContractError):
        HolderWell(np.zeros(2), 1.5, -np.eye(2))


def test_counters():
    c = Counters()
    p = Rayleigh(np.diag([1.0, 2.0, 3.0]))
    ev = evaluate(p, np.array([0.0, 0.0, 1.0]), c)
    ev.hess_vec(np.array([1.0, 0.0, 0.0]))
    ev.hess_vec(np.array([0.0, 1.0, 0.0]))
    value_at(p, np.array([1.0, 0.0, 0.0]), c)
    assert (c.func_evals, c.grad_evals, c.hess_vec_products) == (2, 1, 2)
    # |H e1| = |2(1 - 3)| = 4 is the largest gain seen
    assert c.hess_norm_max == pytest.approx(4.0)
    evaluate(p, np.array([1.0, 0.0, 0.0]), c, value=1.0)
    assert c.func_evals == 2 and c.grad_evals == 2


def test_shifted_operator():
    p = HolderWell(np.zeros(2), 1.0, np.diag([-1.0, 2.0]))
    ev = evaluate(p, np.array([0.5, 0.5]))
    v = np.array([1.0, -1.0])
    np.testing.assert_allclose(ev.shifted(0.3).hess_vec(v), ev.hess_vec(v) + 0.3 * v)


def test_fd_checks_rayleigh():
    rng = np.random.default_rng(0)
    p = planted_rayleigh(np.arange(1.0, 11.0), rng)
    for _ in range(3):
        x = p.manifold.random_point(rng)
        assert check_gradient_fd(p, x, rng) <= 1e-5
        assert check_hessvec_fd(p, x, rng) <= 1e-4


def test_fd_checks_holderwell():
    rng = np.random.default_rng(1)
    B = np.diag([-1.0, 0.5, 2.0])
    p1 = HolderWell(np.zeros(3), 1.0, B)
    p5 = HolderWell(np.zeros(3), 0.5, B)
    for _ in range(3):
        x = rng.uniform(0.5, 2.0, 3) * rng.choice([-1, 1], 3)
        assert check_gradient_fd(p1, x, rng) <= 1e-5
        assert check_gradient_fd(p5, x, rng) <= 1e-5
        assert check_hessvec_fd(p5, x, rng) <= 1e-3


class Quadratic:
    """f(x) = x^T B x / 2 on R^n; the FD validators only need this duck type."""

    name = "quadratic"

    def __init__(self, B):
        self.B = B
        self.n = B.shape[0]
        self.manifold = Euclidean(self.n)

    def value(self, x):
        return 0.5 * x @ self.B @ x

    def gradient(self, x):
        return self.B @ x

    def hess_vec(self, x, v):
        return self.B @ v


def test_fd_quadratic_exact():
    rng = np.random.default_rng(2)
    p = Quadratic(np.array([[1.0, 2.0], [2.0, -3.0]]))
    x = rng.standard_normal(2)
    assert check_gradient_fd(p, x, rng) <= 1e-9
    assert check_hessvec_fd(p, x, rng) <= 1e-9


def test_hess_self_adjoint():
    rng = np.random.default_rng(3)
    probs = [planted_rayleigh(rng.uniform(-3, 3, 8), rng), HolderWell(rng.standard_normal(8), 0.5, np.diag(rng.uniform(-1, 1, 8)))]
    for p in probs:
        for _ in range(100):
            x = p.manifold.random_point(rng)
            u, v = p.manifold.random_tangent(x, rng), p.manifold.random_tangent(x, rng)
            a, b = np.dot(u, p.hess_vec(x, v)), np.dot(v, p.hess_vec(x, u))
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_rayleigh_hessian_matches_dense_formula():
    # oracle: P (A - f I) P * 2 restricted to the tangent space
    rng = np.random.default_rng(4)
    p = planted_rayleigh(rng.uniform(0, 5, 6), rng)
    x = p.manifold.random_point(rng)
    P = np.eye(6) - np.outer(x, x)
    H = 2.0 * P @ (p.A - (x @ p.A @ x) * np.eye(6)) @ P
    v = p.manifold.random_tangent(x, rng)
    np.testing.assert_allclose(p.hess_vec(x, v), H @ v, atol=1e-12)


def test_holder_continuity_dense():
    rng = np.random.default_rng(5)
    mu = 0.5
    a = rng.standard_normal(3)
    p = HolderWell(a, mu, np.diag([-1.0, 0.3, 2.0]))
    for _ in range(200):
        x = a + 0.1 * rng.standard_normal(3)
        y = a + 0.1 * rng.standard_normal(3)
        lhs = np.linalg.norm(p.hessian(x) - p.hessian(y), 2)
        assert lhs <= (1 + mu) * np.linalg.norm(x - y) ** mu + 1e-12


def test_planted_spectrum():
    rng = np.random.default_rng(6)
    spectrum = rng.uniform(-2, 2, 7)
    p = planted_rayleigh(spectrum, rng)
    np.testing.assert_allclose(np.linalg.eigvalsh(p.A), np.sort(spectrum), atol=1e-12)
    assert p.min_eigenvalue() == pytest.approx(spectrum.min())
