import dataclasses

import numpy as np
import pytest

from rarn.objective import Rayleigh, planted_rayleigh
from rarn.rar import RarConfig, rar_solve
from rarn.report import MAX_EVENTS_PER_KIND, IterRecord, RunReport, hard, trace_from_csv, trace_to_csv, verify_invariants
from rarn.rtr import RtrConfig, rtr_solve


def rec(k, f, f_trial, reg, reg_next, rho, success, hv):
    return IterRecord(
        k=k, f=f, grad_norm=0.1, reg=reg, reg_next=reg_next, eta_norm=0.05, rho=rho, success=success,
        model_decrease=1e-3, reg_term=1e-5, step_kind="krylov", subproblem_iters=2, hv_cumulative=hv, f_trial=f_trial,
    )


def synthetic_rar():
    """A legal three-step rar trace: very successful, failed, successful."""
    cfg = RarConfig().as_dict()
    recs = [
        rec(0, 1.0, 0.9, 1.0, 0.5, 0.95, True, 2),
        rec(1, 0.9, 0.95, 0.5, 1.0, -0.5, False, 4),
        rec(2, 0.9, 0.85, 1.0, 1.0, 0.5, True, 6),
    ]
    return RunReport("rar", cfg, records=recs, counters={"hess_vec_products": 6, "hess_norm_max": 1.0})


@pytest.fixture(scope="module")
def rtr_run():
    rng = np.random.default_rng(0)
    p = planted_rayleigh(np.arange(1.0, 21.0), rng)
    return rtr_solve(p, p.manifold.random_point(rng), RtrConfig(eps_g=1e-6, eps_h=1e-3), seed=0)


def test_synthetic_trace_is_clean():
    assert verify_invariants(synthetic_rar()) == []


def test_planted_sigma_expansion_fault():
    r = synthetic_rar()
    # the failed step should double sigma; record a smaller expansion for it and its successor
    r.records[1].reg_next = 0.75
    r.records[2].reg = 0.75
    r.records[2].reg_next = 0.75
    found = hard(verify_invariants(r))
    assert len(found) == 1
    assert found[0]["kind"] == "update_rule" and found[0]["k"] == 1


def test_planted_increase_fault():
    r = synthetic_rar()
    r.records[2].f_trial = 0.95
    found = hard(verify_invariants(r))
    assert [(v["kind"], v["k"]) for v in found] == [("monotone_f", 2)]


def test_planted_acceptance_flag_fault():
    r = synthetic_rar()
    r.records[2].rho = 0.05
    found = hard(verify_invariants(r))
    kinds = {v["kind"] for v in found}
    assert kinds == {"update_rule"}


def test_planted_counter_fault():
    r = synthetic_rar()
    r.counters["hess_vec_products"] = 7
    found = hard(verify_invariants(r))
    assert [v["kind"] for v in found] == ["counters"]


def test_clean_rtr_run(rtr_run):
    assert rtr_run.converged
    assert verify_invariants(rtr_run) == []


def test_clean_rar_run():
    p = Rayleigh(np.diag([1.0, 2.0, 3.0, 4.0]))
    x0 = p.manifold.random_point(np.random.default_rng(3))
    rep = rar_solve(p, x0, RarConfig(eps_g=1e-6, eps_h=1e-3), seed=3)
    assert rep.converged
    assert hard(verify_invariants(rep)) == []


def test_counter_conservation(rtr_run):
    last = rtr_run.records[-1].hv_cumulative
    assert last + rtr_run.final_subproblem_products == rtr_run.counters["hess_vec_products"]


def test_json_round_trip(rtr_run):
    text = rtr_run.to_json()
    back = RunReport.from_json(text)
    assert back == rtr_run
    assert back.to_json() == text
    assert verify_invariants(back) == []


def test_csv_round_trip(rtr_run):
    text = trace_to_csv(rtr_run.records)
    back = trace_from_csv(text)
    assert back == rtr_run.records
    assert text.splitlines()[0].split(",") == [f.name for f in dataclasses.fields(IterRecord)]


def test_csv_round_trip_special_values():
    r = rec(0, 1.0, float("inf"), 1.0, 2.0, -float("inf"), False, 3)
    back = trace_from_csv(trace_to_csv([r]))
    assert back == [r]


def test_warning_cap():
    r = RunReport("rtr", {})
    for i in range(MAX_EVENTS_PER_KIND + 15):
        r.warn("gradient_bound", i, "x")
    r.warn("other", 0, "y")
    assert r.warning_counts == {"gradient_bound": MAX_EVENTS_PER_KIND + 15, "other": 1}
    assert len(r.warnings) == MAX_EVENTS_PER_KIND + 1
