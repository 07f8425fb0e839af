import numpy as np
import pytest

from rarn.errors import ConfigError
from rarn.manifold import Euclidean
from rarn.model import residual_ok
from rarn.objective import Counters, HolderWell, ObjectiveEval, Rayleigh, planted_rayleigh
from rarn.report import RunReport, hard, verify_invariants
from rarn.rtr import RtrConfig, rtr_solve, rtr_subproblem, update_radius


def quad_eval(g, H):
    g = np.asarray(g, dtype=float)
    return ObjectiveEval(np.zeros(g.size), 0.0, g, lambda v: H @ v, Counters())


def sub(ev, cfg, radius, seed=0):
    rep = RunReport("rtr", cfg.as_dict())
    res = rtr_subproblem(ev, radius, cfg, Euclidean(ev.x.size), np.random.default_rng(seed), rep, 0)
    return res, rep


def test_update_rule_examples():
    cfg = RtrConfig()
    assert update_radius(1.0, 0.9, 1.0, cfg) == (2.0, True)
    assert update_radius(8.0, 0.9, 8.0, cfg) == (10.0, True)
    assert update_radius(1.0, 0.9, 0.3, cfg) == (1.0, True)
    assert update_radius(1.0, 0.1, 1.0, cfg) == (0.25, True)
    assert update_radius(1.0, 0.1, 1.0, RtrConfig(rho=0.2)) == (0.25, False)
    assert update_radius(1.0, -np.inf, 1.0, cfg) == (0.25, False)


def test_interior_newton_step():
    # g is an eigenvector, so one Lanczos step spans the exact regularized Newton step
    H = np.diag([2.0, 3.0, 4.0])
    g = np.array([0.5, 0.0, 0.0])
    cfg = RtrConfig(eps_h=1e-2)
    res, rep = sub(quad_eval(g, H), cfg, 100.0)
    ref = -np.linalg.solve(H + 2 * cfg.eps_h * np.eye(3), g)
    assert res.kind == "krylov" and not res.on_boundary
    np.testing.assert_allclose(res.eta, ref, atol=1e-14)
    assert not rep.violations


def test_interior_step_meets_residual_test():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6))
    H = A @ A.T + np.eye(6)
    g = rng.standard_normal(6)
    g /= np.linalg.norm(g)
    cfg = RtrConfig(eps_h=1e-2)
    res, rep = sub(quad_eval(g, H), cfg, 100.0)
    assert res.kind == "krylov" and not res.on_boundary
    np.testing.assert_allclose(res.h_eta, H @ res.eta, atol=1e-10)
    n_eta = np.linalg.norm(res.eta)
    resid = np.linalg.norm(g + (H + 2 * cfg.eps_h * np.eye(6)) @ res.eta)
    assert residual_ok(resid, n_eta, cfg.theta1)
    assert not rep.violations


def test_boundary_step():
    g = np.array([1.0, 0.0, 0.0])
    H = np.diag([-5.0, 1.0, 2.0])
    res, rep = sub(quad_eval(g, H), RtrConfig(), 1.0)
    assert res.kind == "krylov" and res.on_boundary
    assert np.linalg.norm(res.eta) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(res.eta, [-1.0, 0.0, 0.0], atol=1e-12)
    assert not rep.violations


def test_zero_gradient_meo_step():
    H = np.diag([-1.0, 1.0])
    res, rep = sub(quad_eval(np.zeros(2), H), RtrConfig(eps_h=0.5), 0.5)
    assert res.kind == "meo"
    np.testing.assert_allclose(np.abs(res.eta), [0.5, 0.0], atol=1e-12)
    assert not rep.violations


def test_psd_small_gradient_terminates():
    res, _ = sub(quad_eval(np.zeros(3), np.eye(3)), RtrConfig(eps_h=0.1), 1.0)
    assert res.kind == "terminate" and res.certificate["source"] == "meo"


def test_meo_contradiction_is_reported():
    # K_sub = 1 with a PSD Hessian: the Krylov budget runs out, the oracle certifies
    rng = np.random.default_rng(1)
    H = np.diag(np.linspace(0.1, 10.0, 20))
    res, rep = sub(quad_eval(rng.standard_normal(20), H), RtrConfig(eps_h=1.0, c_sub=1.0), 100.0)
    assert res.kind == "stalled"
    assert rep.warning_counts.get("meo_contradiction") == 1


def test_rayleigh_random_start():
    p = Rayleigh(np.diag([1.0, 2.0, 3.0]))
    for seed in range(3):
        x0 = p.manifold.random_point(np.random.default_rng(seed))
        rep = rtr_solve(p, x0, RtrConfig(eps_g=1e-6, eps_h=1e-3), seed=seed)
        assert rep.converged
        assert rep.f_final == pytest.approx(1.0, abs=1e-6)
        assert not hard(verify_invariants(rep))


def test_saddle_escape():
    p = Rayleigh(np.diag(np.arange(1.0, 11.0)))
    rep = rtr_solve(p, np.eye(10)[1], RtrConfig(eps_g=1e-6, eps_h=1e-3), seed=0)
    assert rep.records[0].step_kind == "meo"
    assert rep.records[0].success and rep.records[0].f_trial < 2.0
    assert rep.converged and rep.f_final == pytest.approx(1.0, abs=1e-6)


def test_start_at_minimizer():
    rep = rtr_solve(Rayleigh(np.diag([1.0, 2.0, 3.0])), np.array([1.0, 0, 0]), RtrConfig())
    assert rep.converged and rep.iterations == 0


def test_invariants_on_trace():
    rng = np.random.default_rng(2)
    p = planted_rayleigh(np.arange(1.0, 41.0), rng)
    cfg = RtrConfig(eps_g=1e-7, eps_h=1e-3)
    rep = rtr_solve(p, p.manifold.random_point(rng), cfg, seed=1)
    assert rep.converged
    for r in rep.records:
        assert 0.0 < r.reg_next <= cfg.delta_max
        assert r.model_decrease >= 0.25 * cfg.eps_h * r.eta_norm**2 - 1e-12
        if r.success:
            assert r.f - r.f_trial >= cfg.rho * cfg.eps_h / 4 * r.eta_norm**2 - 1e-12
    assert not hard(verify_invariants(rep))


def test_holderwell_converges():
    p = HolderWell(np.zeros(4), 0.5, np.diag([-0.3, 0.5, 1.0, 2.0]))
    rep = rtr_solve(p, np.array([0.1, -0.2, 0.3, 0.05]), RtrConfig(eps_g=1e-6, eps_h=1e-2), seed=0)
    assert rep.converged
    assert not hard(verify_invariants(rep))


@pytest.mark.parametrize(
    "kw",
    [{"kappa1": 2.0}, {"kappa2": 0.5}, {"rho": 0.25}, {"delta0": 20.0}, {"delta_max": 0.0}, {"eps_h": 0.0}, {"c_sub": 0.0}],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RtrConfig(**kw)
