"""Stochastic DC dispatch with expected-overload limits.

Schedules conventional generation, wind set-points, response shares and
reserves under correlated Gaussian forecast errors.  Every physical limit
is enforced as a bound on its expected overload in MW, and the convex
risk surface is solved by cutting planes over a linear master problem.
"""

from .case_io import (Generator, Line, MatpowerParseError, Network,
                      WindConfigError, apply_stress_modifiers,
                      load_case_file, load_wind_config, load_wind_file,
                      parse_matpower_case, repair_correlation,
                      serialize_matpower_case)
from .dc_network import NetworkStructureError, PtdfMatrix, build_ptdf, \
    line_flows
from .solver import (DEFAULT_WIND_RESERVE_COST, Problem, SolveReport,
                     SolverOptions, build_problem, solve_wcc_opf)
from .stochastics import (capped_moments, capped_wcc_value,
                          expected_positive_part, mc_expected_overload,
                          norm_cdf, sample_mvn)
from .validation import ValidationReport, capped_output_moments, \
    validate_dispatch
from .wcc import (FAMILIES, ConstraintSet, EpsilonConfig, WccConstraint,
                  build_constraints)
from .wind_model import (Decision, WindFleet, WindPlant, build_fleet,
                         scale_to_penetration)

__version__ = "0.1.0"

__all__ = [
    "Generator", "Line", "Network", "MatpowerParseError", "WindConfigError",
    "parse_matpower_case", "serialize_matpower_case", "load_case_file",
    "load_wind_config", "load_wind_file", "apply_stress_modifiers",
    "repair_correlation",
    "PtdfMatrix", "NetworkStructureError", "build_ptdf", "line_flows",
    "WindPlant", "WindFleet", "Decision", "build_fleet",
    "scale_to_penetration",
    "norm_cdf", "expected_positive_part", "capped_moments",
    "capped_wcc_value", "sample_mvn", "mc_expected_overload",
    "FAMILIES", "EpsilonConfig", "WccConstraint", "ConstraintSet",
    "build_constraints",
    "Problem", "SolverOptions", "SolveReport", "build_problem",
    "solve_wcc_opf", "DEFAULT_WIND_RESERVE_COST",
    "ValidationReport", "validate_dispatch", "capped_output_moments",
    "__version__",
]
