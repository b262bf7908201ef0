from importlib import resources

import pytest

from wccopf.case_io import (apply_stress_modifiers, load_case_file,
                            load_wind_file)
from wccopf.solver import build_problem, solve_wcc_opf
from wccopf.wind_model import build_fleet, scale_to_penetration

import helpers


def _data_path(name):
    return resources.files("wccopf") / "data" / name


@pytest.fixture(scope="session")
def toy_gauss_problem():
    return build_problem(helpers.triangle_network(), helpers.gauss_fleet(),
                         epsilon=0.1)


@pytest.fixture(scope="session")
def toy_gauss_solution(toy_gauss_problem):
    report = solve_wcc_opf(toy_gauss_problem)
    assert report.converged
    return report


@pytest.fixture(scope="session")
def toy_capped_problem():
    return build_problem(helpers.triangle_network(), helpers.capped_fleet(),
                         epsilon=0.1)


@pytest.fixture(scope="session")
def toy_capped_solution(toy_capped_problem):
    report = solve_wcc_opf(toy_capped_problem)
    assert report.converged
    return report


@pytest.fixture(scope="session")
def net118():
    with resources.as_file(_data_path("ieee118.m")) as p:
        return load_case_file(p)


@pytest.fixture(scope="session")
def net118_stressed(net118):
    return apply_stress_modifiers(net118)


@pytest.fixture(scope="session")
def fleet118(net118_stressed):
    with resources.as_file(_data_path("wind25.json")) as p:
        cfg = load_wind_file(p, net118_stressed)
    fleet = build_fleet(cfg, net118_stressed)
    return scale_to_penetration(fleet, net118_stressed.total_load, 75.0)
