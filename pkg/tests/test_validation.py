import dataclasses
import math

import numpy as np
import pytest

from wccopf.solver import build_problem, solve_wcc_opf
from wccopf.validation import capped_output_moments, validate_dispatch
from wccopf.wind_model import WindFleet

from helpers import capped_fleet, random_decision, triangle_network


def test_solved_dispatch_validates(toy_capped_problem, toy_capped_solution):
    rep = validate_dispatch(toy_capped_problem, toy_capped_solution.decision,
                            n_samples=200_000, seed=3)
    assert rep.all_ok
    assert rep.failed() == []
    assert rep.n_samples == 200_000
    assert rep.max_excess_mw <= 0.0
    d = rep.to_dict()
    assert len(d["constraints"]) == \
        toy_capped_problem.constraints.n_constraints


def test_stripping_reserves_is_caught(toy_gauss_problem, toy_gauss_solution):
    x = toy_gauss_solution.decision.copy()
    x.r_up_g[:] = 0.0
    x.r_up_w[:] = 0.0
    rep = validate_dispatch(toy_gauss_problem, x, n_samples=100_000, seed=5)
    assert not rep.all_ok
    bad = {c.family for c in rep.failed()}
    assert bad and bad <= {"gen_reserve_up", "wind_reserve_up"}
    assert rep.max_excess_mw > 0.0


def test_empirical_means_track_quadrature(toy_capped_problem,
                                          toy_capped_solution):
    cs = toy_capped_problem.constraints
    x = toy_capped_solution.decision
    exact = cs.evaluate_all(x, screen=False)
    rep = validate_dispatch(toy_capped_problem, x, n_samples=400_000, seed=9)
    emp = np.array([c.expected_overload_mw for c in rep.constraints])
    se = np.array([c.stderr_mw for c in rep.constraints])
    assert np.all(np.abs(emp - exact) <= 4.0 * se + 1e-6)


def test_stderr_shrinks_like_root_n(toy_capped_problem, toy_capped_solution):
    x = toy_capped_solution.decision
    small = validate_dispatch(toy_capped_problem, x, n_samples=10_000, seed=2)
    big = validate_dispatch(toy_capped_problem, x, n_samples=1_000_000,
                            seed=2)
    k = int(np.argmax([c.stderr_mw for c in big.constraints]))
    ratio = small.constraints[k].stderr_mw / big.constraints[k].stderr_mw
    assert 10.0 / 1.4 < ratio < 10.0 * 1.4


def test_chunk_size_does_not_change_estimates(toy_capped_problem,
                                              toy_capped_solution):
    x = toy_capped_solution.decision
    a = validate_dispatch(toy_capped_problem, x, n_samples=50_000, seed=7,
                          chunk=50_000)
    b = validate_dispatch(toy_capped_problem, x, n_samples=50_000, seed=7,
                          chunk=1_000)
    va = np.array([c.expected_overload_mw for c in a.constraints])
    vb = np.array([c.expected_overload_mw for c in b.constraints])
    assert np.allclose(va, vb, rtol=1e-12, atol=1e-12)


def test_no_spill_without_caps(toy_gauss_problem, toy_gauss_solution):
    rep = validate_dispatch(toy_gauss_problem, toy_gauss_solution.decision,
                            n_samples=50_000, seed=1)
    assert rep.total_spilled_mw == 0.0
    withheld = sum(max(m - v, 0.0) for m, v in
                   zip(toy_gauss_problem.fleet.means,
                       toy_gauss_solution.decision.v))
    assert rep.total_withheld_mw == pytest.approx(withheld, abs=1e-9)
    assert rep.total_curtailment_mw == pytest.approx(
        rep.total_withheld_mw + rep.total_spilled_mw, abs=1e-9)


def test_zero_cap_spills_half_normal_mean():
    net = triangle_network()
    fleet = capped_fleet()
    plants = list(fleet.plants)
    plants[2] = dataclasses.replace(plants[2], cap_mw=0.0)   # sigma 10
    fleet = WindFleet(plants, fleet.correlation, seed=fleet.seed)
    problem = build_problem(net, fleet, epsilon=0.1)
    x = random_decision(problem, np.random.default_rng(3))
    rep = validate_dispatch(problem, x, n_samples=300_000, seed=6)
    pc = next(c for c in rep.curtailment if c.bus == plants[2].bus)
    expect = 10.0 / math.sqrt(2 * math.pi)
    assert pc.spilled_mw == pytest.approx(
        expect, abs=4 * pc.spilled_stderr_mw)
    assert pc.policy == "cap"


def test_capped_output_moments_closed_form():
    sig, cap = 30.0, -45.0
    mean, std = capped_output_moments(sig, cap)
    rng = np.random.default_rng(12)
    w = np.minimum(rng.normal(scale=sig, size=2_000_000), cap)
    se = w.std() / math.sqrt(len(w))
    assert mean == pytest.approx(w.mean(), abs=3 * se)
    assert std == pytest.approx(w.std(), rel=5e-3)
    # limits
    m_inf, s_inf = capped_output_moments(sig, 1e9)
    assert m_inf == pytest.approx(0.0, abs=1e-9)
    assert s_inf == pytest.approx(sig, abs=1e-9)
    m0, s0 = capped_output_moments(0.0, -4.0)
    assert (m0, s0) == (-4.0, 0.0)


def test_validation_is_deterministic(toy_capped_problem,
                                     toy_capped_solution):
    x = toy_capped_solution.decision
    a = validate_dispatch(toy_capped_problem, x, n_samples=20_000, seed=4)
    b = validate_dispatch(toy_capped_problem, x, n_samples=20_000, seed=4)
    va = [c.expected_overload_mw for c in a.constraints]
    vb = [c.expected_overload_mw for c in b.constraints]
    assert va == vb
