import dataclasses

import numpy as np
import pytest

from wccopf.wcc import ConstraintSet, EpsilonConfig, build_constraints
from wccopf.wind_model import Decision, WindFleet

from helpers import random_decision


def test_constraint_count_all_reserve(net118_stressed, fleet118):
    from wccopf.dc_network import build_ptdf
    cs = build_constraints(net118_stressed, fleet118,
                           build_ptdf(net118_stressed))
    assert cs.n_constraints == 555
    nG = net118_stressed.n_gen
    nL = len(cs.line_sel)
    nW = fleet118.n_plants
    assert (nG, nW, nL) == (54, 25, 186)
    assert cs.n_constraints == 2 * nG + 3 * nW + 2 * nL


def test_constraint_count_with_two_capped_plants(net118_stressed, fleet118):
    from wccopf.dc_network import build_ptdf
    plants = list(fleet118.plants)
    for k in (0, 5):
        plants[k] = dataclasses.replace(plants[k], policy="cap", cap_mw=-20.0)
    fleet = WindFleet(plants, fleet118.correlation, seed=fleet118.seed)
    cs = build_constraints(net118_stressed, fleet,
                           build_ptdf(net118_stressed))
    # capped plants drop their two reserve rows and the availability row
    assert cs.n_constraints == 549
    assert len(cs.R) == 23
    fams = [c.family for c in cs.constraints]
    assert fams.count("wind_reserve_up") == 23
    assert fams.count("wind_availability") == 23


def test_epsilon_resolution_precedence():
    eps = EpsilonConfig(default=0.1,
                        per_family={"line_upper": 0.05},
                        per_constraint={("line_upper", 3): 0.01})
    assert eps.resolve("gen_reserve_up", 0) == 0.1
    assert eps.resolve("line_upper", 7) == 0.05
    assert eps.resolve("line_upper", 3) == 0.01


def test_scalar_epsilon_broadcasts(toy_gauss_problem):
    p = toy_gauss_problem
    cs = ConstraintSet(p.net, p.fleet, p.ptdf, epsilon=0.25)
    assert np.all(cs.eps_vec == 0.25)
    assert all(c.epsilon == 0.25 for c in cs.constraints)


def test_labels_and_index_round_trip(toy_capped_problem):
    cs = toy_capped_problem.constraints
    for i, c in enumerate(cs.constraints):
        assert cs.index_of(c) == i
    c = cs.constraints[0]
    assert c.label() == "%s[%d]" % (c.family, c.index)
    fams = {c.family for c in cs.constraints}
    assert "line_upper" in fams and "gen_reserve_down" in fams


@pytest.mark.parametrize("fixture", ["toy_gauss_problem",
                                     "toy_capped_problem"])
def test_batch_evaluation_matches_single(fixture, request):
    p = request.getfixturevalue(fixture)
    cs = p.constraints
    rng = np.random.default_rng(17)
    x = random_decision(p, rng)
    vals = cs.evaluate_all(x, screen=False)
    singles = np.array([cs.evaluate(c, x) for c in cs.constraints])
    assert np.allclose(vals, singles, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("fixture", ["toy_gauss_problem",
                                     "toy_capped_problem"])
def test_screened_values_bound_exact_from_above(fixture, request):
    p = request.getfixturevalue(fixture)
    cs = p.constraints
    rng = np.random.default_rng(23)
    for _ in range(5):
        x = random_decision(p, rng)
        exact = cs.evaluate_all(x, screen=False)
        screened = cs.evaluate_all(x, screen=True)
        assert np.all(screened >= exact - 1e-9)
        # anything the screen could not discharge is computed exactly
        hot = exact > 0.25 * cs.eps_vec
        assert np.allclose(screened[hot], exact[hot], atol=1e-12)


@pytest.mark.parametrize("fixture", ["toy_gauss_problem",
                                     "toy_capped_problem"])
def test_gradients_match_finite_differences(fixture, request):
    p = request.getfixturevalue(fixture)
    cs = p.constraints
    rng = np.random.default_rng(31)
    x = random_decision(p, rng)
    vec = x.to_vector()
    h = 1e-5

    seen = set()
    picks = []
    for c in cs.constraints:
        if c.family not in seen:
            seen.add(c.family)
            picks.append(c)
    for c in picks:
        g = cs.gradient(c, x)
        for k in rng.choice(len(vec), size=min(8, len(vec)), replace=False):
            vp, vm = vec.copy(), vec.copy()
            vp[k] += h
            vm[k] -= h
            fp = cs.evaluate(c, Decision.from_vector(vp, cs.layout.n_gen, cs.layout.n_wind))
            fm = cs.evaluate(c, Decision.from_vector(vm, cs.layout.n_gen, cs.layout.n_wind))
            fd = (fp - fm) / (2 * h)
            assert g[k] == pytest.approx(fd, rel=2e-4, abs=5e-7), \
                (c.label(), k)


def test_gradient_rows_matches_per_constraint(toy_capped_problem):
    cs = toy_capped_problem.constraints
    rng = np.random.default_rng(41)
    x = random_decision(toy_capped_problem, rng)
    idx = rng.choice(cs.n_constraints, size=12, replace=False)
    rows = cs.gradient_rows(x, idx)
    for r, i in zip(rows, idx):
        gi = cs.gradient(cs.constraints[int(i)], x)
        assert np.allclose(r, gi, atol=1e-11)


def test_constraint_values_respond_to_reserves(toy_gauss_problem):
    # buying more up reserve can only lower the up-side overload
    p = toy_gauss_problem
    cs = p.constraints
    rng = np.random.default_rng(7)
    x = random_decision(p, rng)
    lo = cs.evaluate_all(x, screen=False)
    x2 = x.copy()
    x2.r_up_g = x.r_up_g + 10.0
    hi = cs.evaluate_all(x2, screen=False)
    sl = cs._fam_ofs["gen_reserve_up"]
    assert np.all(hi[sl] <= lo[sl] + 1e-12)
    assert np.any(hi[sl] < lo[sl] - 1e-9)
