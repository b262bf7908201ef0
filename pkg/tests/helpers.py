"""Builders shared across the tests."""

import numpy as np

from wccopf.case_io import Generator, Line, Network
from wccopf.wind_model import Decision, WindFleet, WindPlant


def triangle_network(limits=(60.0, 90.0, 100.0), load=180.0,
                     cost2=25.0) -> Network:
    """Three buses in a ring, two generators, one load at bus 3."""
    return Network(
        base_mva=100.0,
        bus_ids=[1, 2, 3],
        loads_mw=np.array([0.0, 0.0, load]),
        generators=[
            Generator(bus=1, p_min=0.0, p_max=250.0, cost_energy=10.0),
            Generator(bus=2, p_min=0.0, p_max=200.0, cost_energy=cost2),
        ],
        lines=[
            Line(1, 2, susceptance=10.0, limit_mw=limits[0]),
            Line(1, 3, susceptance=10.0, limit_mw=limits[1]),
            Line(2, 3, susceptance=10.0, limit_mw=limits[2]),
        ],
        slack_bus=1)


def gauss_fleet() -> WindFleet:
    return WindFleet([WindPlant(2, 60.0, 18.0, "reserve")], np.eye(1),
                     seed=11)


def capped_fleet() -> WindFleet:
    corr = np.array([[1.0, 0.30, 0.20],
                     [0.30, 1.0, 0.25],
                     [0.20, 0.25, 1.0]])
    return WindFleet([
        WindPlant(1, 40.0, 12.0, "reserve"),
        WindPlant(2, 45.0, 15.0, "cap", cap_mw=-5.0),
        WindPlant(3, 30.0, 10.0, "cap", cap_mw=10.0),
    ], corr, seed=4)


def random_decision(problem, rng, reserve_scale=30.0) -> Decision:
    """Domain-valid random decision: bounds kept, response shares
    normalized to one, reserves only where the policy allows them."""
    net, fleet = problem.net, problem.fleet
    nG, nW = net.n_gen, fleet.n_plants
    pmin = np.array([g.p_min for g in net.generators])
    pmax = np.array([g.p_max for g in net.generators])
    p = pmin + (pmax - pmin) * rng.random(nG)
    v = fleet.means * rng.random(nW)

    in_R = np.zeros(nW, dtype=bool)
    in_R[fleet.reserve_idx] = True
    ag = rng.random(nG)
    aw = np.where(in_R, rng.random(nW), 0.0)
    total = ag.sum() + aw.sum()
    ag /= total
    aw /= total

    r_up_w = np.where(in_R, reserve_scale * rng.random(nW), 0.0)
    r_dn_w = np.where(in_R, reserve_scale * rng.random(nW), 0.0)
    return Decision(p=p, v=v, alpha_g=ag, alpha_w=aw,
                    r_up_g=reserve_scale * rng.random(nG),
                    r_dn_g=reserve_scale * rng.random(nG),
                    r_up_w=r_up_w, r_dn_w=r_dn_w)
