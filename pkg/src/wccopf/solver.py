"""Cutting-plane solution of the stochastic scheduling problem.

The master problem is a linear program over set-points, participation
factors and reserve bands.  Expected-overload constraints are enforced
lazily: each iteration solves the master, evaluates every weighted chance
constraint at the candidate, and adds a first-order cut for each violated
one.  Convexity of the expected-overload functions makes every cut valid
for the true feasible set, so master objectives increase monotonically
toward the optimum and never cut off a feasible point.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .case_io import Network
from .dc_network import build_ptdf
from .stochastics import capped_moments
from .wcc import ConstraintSet, EpsilonConfig
from .wind_model import Decision, WindFleet

__all__ = ["Problem", "SolverOptions", "SolveReport", "MasterLP",
           "build_problem", "assemble_master", "lp_solve", "solve_wcc_opf",
           "DEFAULT_WIND_RESERVE_COST"]

log = logging.getLogger(__name__)

# wind energy bids zero by default; reserve capability is priced modestly
# so the balancing burden does not pile onto wind for free
DEFAULT_WIND_RESERVE_COST = 5.0


@dataclass
class SolverOptions:
    tol_feas: float = 1e-4          # MW tolerance on expected overloads
    max_iters: int = 500
    quad_nodes: int = 32
    qmc_log2: int = 16
    qmc_seed: int = 7
    screen: bool = True
    record_cuts: bool = False
    verbose: bool = False


@dataclass
class Problem:
    net: Network
    fleet: WindFleet
    ptdf: object
    constraints: ConstraintSet
    wind_energy_cost: np.ndarray
    wind_res_up_cost: np.ndarray
    wind_res_dn_cost: np.ndarray

    @property
    def n_gen(self):
        return self.net.n_gen

    @property
    def n_wind(self):
        return self.fleet.n_plants


def build_problem(net: Network, fleet: WindFleet, epsilon=None,
                  reference_bus: int = None,
                  wind_energy_cost: float = 0.0,
                  wind_reserve_cost: float = DEFAULT_WIND_RESERVE_COST,
                  quad_nodes: int = 32, qmc_log2: int = 16,
                  qmc_seed: int = 7) -> Problem:
    ptdf = build_ptdf(net, reference_bus=reference_bus)
    cs = ConstraintSet(net, fleet, ptdf, epsilon=epsilon,
                       quad_nodes=quad_nodes, qmc_log2=qmc_log2,
                       qmc_seed=qmc_seed)
    nW = fleet.n_plants
    return Problem(
        net=net, fleet=fleet, ptdf=ptdf, constraints=cs,
        wind_energy_cost=np.full(nW, float(wind_energy_cost)),
        wind_res_up_cost=np.full(nW, float(wind_reserve_cost)),
        wind_res_dn_cost=np.full(nW, float(wind_reserve_cost)))


class ProblemStructureError(ValueError):
    pass


@dataclass
class MasterLP:
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray        # static rows, may be empty
    b_ub: np.ndarray
    bounds: list
    n_gen: int
    n_wind: int


def assemble_master(problem: Problem) -> MasterLP:
    """Objective, bounds, balance and static coupling rows of the LP."""
    net = problem.net
    fleet = problem.fleet
    cs = problem.constraints
    nG, nW = net.n_gen, fleet.n_plants
    layout = cs.layout
    sl = layout.slices()
    n = layout.size

    c = np.zeros(n)
    c[sl["p"]] = [g.cost_energy for g in net.generators]
    c[sl["v"]] = problem.wind_energy_cost
    c[sl["r_up_g"]] = [g.cost_res_up for g in net.generators]
    c[sl["r_dn_g"]] = [g.cost_res_dn for g in net.generators]
    c[sl["r_up_w"]] = problem.wind_res_up_cost
    c[sl["r_dn_w"]] = problem.wind_res_dn_cost

    reserve_set = set(fleet.reserve_idx.tolist())
    bounds = [None] * n
    for i, g in enumerate(net.generators):
        bounds[sl["p"].start + i] = (g.p_min, g.p_max)
        bounds[sl["alpha_g"].start + i] = (0.0, 1.0)
        bounds[sl["r_up_g"].start + i] = (0.0, g.r_up_max)
        bounds[sl["r_dn_g"].start + i] = (0.0, g.r_dn_max)
    for j, p in enumerate(fleet.plants):
        bounds[sl["v"].start + j] = (0.0, p.mean_mw)
        in_r = j in reserve_set
        bounds[sl["alpha_w"].start + j] = (0.0, 1.0) if in_r else (0.0, 0.0)
        rmax = p.mean_mw if in_r else 0.0
        bounds[sl["r_up_w"].start + j] = (0.0, rmax)
        bounds[sl["r_dn_w"].start + j] = (0.0, rmax)

    # nominal power balance and full deployment of the aggregate deviation
    A_eq = np.zeros((2, n))
    A_eq[0, sl["p"]] = 1.0
    A_eq[0, sl["v"]] = 1.0
    b_bal = net.total_load - fleet.cap_shift.sum()
    A_eq[1, sl["alpha_g"]] = 1.0
    A_eq[1, sl["alpha_w"]] = 1.0
    b_eq = np.array([b_bal, 1.0])

    p_max_tot = sum(g.p_max for g in net.generators)
    p_min_tot = sum(g.p_min for g in net.generators)
    v_max_tot = fleet.means.sum()
    if p_max_tot + v_max_tot < b_bal - 1e-9:
        raise ProblemStructureError(
            "total capacity %.1f MW cannot meet the %.1f MW nominal "
            "balance target" % (p_max_tot + v_max_tot, b_bal))
    if p_min_tot > b_bal + 1e-9:
        raise ProblemStructureError(
            "total minimum generation %.1f MW exceeds the %.1f MW nominal "
            "balance target" % (p_min_tot, b_bal))

    rows = []
    rhs = []
    for i, g in enumerate(net.generators):
        r = np.zeros(n)
        r[sl["p"].start + i] = 1.0
        r[sl["r_up_g"].start + i] = 1.0
        rows.append(r)
        rhs.append(g.p_max)
        r = np.zeros(n)
        r[sl["p"].start + i] = -1.0
        r[sl["r_dn_g"].start + i] = 1.0
        rows.append(r)
        rhs.append(-g.p_min)
    for j in fleet.reserve_idx:
        r = np.zeros(n)
        r[sl["v"].start + j] = 1.0
        r[sl["r_up_w"].start + j] = 1.0
        rows.append(r)
        rhs.append(fleet.plants[j].mean_mw)

    if fleet.is_deterministic:
        # no uncertainty: every expected overload is the plain positive
        # part, so the chance constraints collapse to linear rows
        for j in fleet.reserve_idx:
            r = np.zeros(n)
            r[sl["r_dn_w"].start + j] = 1.0
            r[sl["v"].start + j] = -1.0
            rows.append(r)
            rhs.append(cs.epsilon.resolve("wind_availability", int(j)))
        gi = np.arange(nG)
        for k, li in enumerate(cs.line_sel):
            base = cs.flow_shift_c[k] - cs.d_flow_c[k]
            for fam, sgn in (("line_upper", 1.0), ("line_lower", -1.0)):
                r = np.zeros(n)
                r[sl["p"]] = sgn * cs.Mg_c[k]
                r[sl["v"]] = sgn * cs.Mw_c[k]
                rows.append(r)
                rhs.append(cs.limits[k] - sgn * base
                           + cs.epsilon.resolve(fam, int(li)))

    A_ub = np.array(rows) if rows else np.zeros((0, n))
    return MasterLP(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub,
                    b_ub=np.array(rhs), bounds=bounds, n_gen=nG, n_wind=nW)


@dataclass
class LpResult:
    status: str
    x: np.ndarray = None
    objective: float = None
    message: str = ""


_LP_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible",
              3: "unbounded", 4: "numerical"}


def lp_solve(master: MasterLP, extra_rows=None, extra_rhs=None) -> LpResult:
    A_ub = master.A_ub
    b_ub = master.b_ub
    if extra_rows is not None and len(extra_rows):
        A_ub = np.vstack([A_ub, np.asarray(extra_rows)])
        b_ub = np.concatenate([b_ub, np.asarray(extra_rhs)])
    res = linprog(master.c, A_ub=A_ub if len(A_ub) else None,
                  b_ub=b_ub if len(b_ub) else None,
                  A_eq=master.A_eq, b_eq=master.b_eq, bounds=master.bounds,
                  method="highs")
    status = _LP_STATUS.get(res.status, "error")
    if status != "optimal":
        return LpResult(status=status, message=res.message)
    return LpResult(status="optimal", x=res.x, objective=float(res.fun))


@dataclass
class SolveReport:
    status: str
    objective: float = None
    iterations: int = 0
    n_cuts: int = 0
    max_violation: float = None
    decision: Decision = None
    cost_energy_gen: float = 0.0
    cost_energy_wind: float = 0.0
    cost_reserve_gen: float = 0.0
    cost_reserve_wind: float = 0.0
    total_wind_mw: float = 0.0
    total_reserve_mw: float = 0.0
    curtailment_forecast_mw: float = 0.0
    expected_cap_spill_mw: float = 0.0
    wind_detail: list = field(default_factory=list)
    history: list = field(default_factory=list)
    cut_families: dict = field(default_factory=dict)
    cuts: list = field(default_factory=list)
    message: str = ""
    wall_time_s: float = 0.0

    @property
    def converged(self):
        return self.status == "converged"

    def to_dict(self):
        d = {
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "n_cuts": self.n_cuts,
            "max_violation": self.max_violation,
            "cost_energy_gen": self.cost_energy_gen,
            "cost_energy_wind": self.cost_energy_wind,
            "cost_reserve_gen": self.cost_reserve_gen,
            "cost_reserve_wind": self.cost_reserve_wind,
            "total_wind_mw": self.total_wind_mw,
            "total_reserve_mw": self.total_reserve_mw,
            "curtailment_forecast_mw": self.curtailment_forecast_mw,
            "expected_cap_spill_mw": self.expected_cap_spill_mw,
            "wind_detail": self.wind_detail,
            "history": self.history,
            "cut_families": self.cut_families,
            "message": self.message,
            "wall_time_s": self.wall_time_s,
        }
        if self.decision is not None:
            d["decision"] = {
                name: getattr(self.decision, name).tolist()
                for name in ("p", "v", "alpha_g", "alpha_w", "r_up_g",
                             "r_dn_g", "r_up_w", "r_dn_w")}
        return d


def _fill_costs(report: SolveReport, problem: Problem, master: MasterLP,
                x: Decision):
    net = problem.net
    fleet = problem.fleet
    report.decision = x
    report.cost_energy_gen = float(
        sum(g.cost_energy * pi for g, pi in zip(net.generators, x.p)))
    report.cost_energy_wind = float(problem.wind_energy_cost @ x.v)
    report.cost_reserve_gen = float(
        sum(g.cost_res_up * ru + g.cost_res_dn * rd
            for g, ru, rd in zip(net.generators, x.r_up_g, x.r_dn_g)))
    report.cost_reserve_wind = float(problem.wind_res_up_cost @ x.r_up_w
                                     + problem.wind_res_dn_cost @ x.r_dn_w)
    report.total_wind_mw = float(x.v.sum())
    report.total_reserve_mw = float(x.r_up_g.sum() + x.r_dn_g.sum()
                                    + x.r_up_w.sum() + x.r_dn_w.sum())
    report.curtailment_forecast_mw = float((fleet.means - x.v).sum())
    spill_total = 0.0
    detail = []
    for j, p in enumerate(fleet.plants):
        row = {"bus": p.bus, "policy": p.policy,
               "forecast_mw": float(p.mean_mw), "set_point_mw": float(x.v[j]),
               "alpha": float(x.alpha_w[j]),
               "r_up_mw": float(x.r_up_w[j]), "r_dn_mw": float(x.r_dn_w[j])}
        if p.policy == "cap":
            mean_dev, _, spill = capped_moments(p.std_mw, p.cap_mw)
            row["cap_mw"] = float(p.cap_mw)
            row["expected_spill_mw"] = float(spill)
            row["expected_output_mw"] = float(x.v[j] + mean_dev)
            spill_total += spill
        else:
            row["expected_output_mw"] = float(x.v[j])
        detail.append(row)
    report.wind_detail = detail
    report.expected_cap_spill_mw = float(spill_total)


def solve_wcc_opf(problem: Problem, options: SolverOptions = None) \
        -> SolveReport:
    """Run the cutting-plane loop until no expected overload exceeds its
    budget by more than the feasibility tolerance."""
    if options is None:
        options = SolverOptions()
    t0 = time.perf_counter()
    cs = problem.constraints
    report = SolveReport(status="error")
    try:
        master = assemble_master(problem)
    except ProblemStructureError as exc:
        report.status = "infeasible"
        report.message = str(exc)
        report.wall_time_s = time.perf_counter() - t0
        return report

    cut_rows = []
    cut_rhs = []
    cut_src = []
    nG, nW = master.n_gen, master.n_wind
    last_obj = None

    for it in range(1, options.max_iters + 1):
        res = lp_solve(master, cut_rows, cut_rhs)
        if res.status == "infeasible":
            fams = {}
            for ci in cut_src:
                fam = cs.constraints[ci].family
                fams[fam] = fams.get(fam, 0) + 1
            report.status = "infeasible"
            report.iterations = it
            report.n_cuts = len(cut_rows)
            report.cut_families = fams
            report.message = ("master infeasible after %d cuts; cut "
                              "families: %s" % (len(cut_rows), fams or "{}"))
            report.wall_time_s = time.perf_counter() - t0
            return report
        if res.status != "optimal":
            report.status = "error"
            report.message = "LP backend: %s (%s)" % (res.status, res.message)
            report.wall_time_s = time.perf_counter() - t0
            return report

        if last_obj is not None and res.objective < last_obj - 1e-6:
            log.warning("master objective decreased from %.6f to %.6f",
                        last_obj, res.objective)
        last_obj = res.objective
        x = Decision.from_vector(res.x, nG, nW)
        vals = cs.evaluate_all(x, screen=options.screen)
        viol = vals - cs.eps_vec
        max_viol = float(viol.max()) if len(viol) else 0.0
        report.history.append({"iteration": it,
                               "objective": float(res.objective),
                               "max_violation": max_viol,
                               "n_cuts": len(cut_rows)})
        if options.verbose:
            log.info("iter %3d obj %.4f max violation %.6f cuts %d",
                     it, res.objective, max_viol, len(cut_rows))

        if max_viol <= options.tol_feas:
            if options.screen:
                vals = cs.evaluate_all(x, screen=False)
                max_viol = float((vals - cs.eps_vec).max())
            report.status = "converged"
            report.objective = float(res.objective)
            report.iterations = it
            report.n_cuts = len(cut_rows)
            report.max_violation = max_viol
            _fill_costs(report, problem, master, x)
            fams = {}
            for ci in cut_src:
                fam = cs.constraints[ci].family
                fams[fam] = fams.get(fam, 0) + 1
            report.cut_families = fams
            if options.record_cuts:
                report.cuts = [
                    {"constraint": cs.constraints[ci].label(),
                     "row": row.tolist(), "rhs": float(rhs)}
                    for row, rhs, ci in zip(cut_rows, cut_rhs, cut_src)]
            report.wall_time_s = time.perf_counter() - t0
            return report

        idx = np.where(viol > options.tol_feas)[0]
        xvec = x.to_vector()
        rows = cs.gradient_rows(x, idx)
        for r_i, ci in enumerate(idx):
            g = rows[r_i]
            norm = np.abs(g).max()
            if norm <= 1e-14:
                log.warning("zero gradient for violated %s; skipping cut",
                            cs.constraints[ci].label())
                continue
            # value + g.(x' - x) <= eps  =>  g.x' <= eps - value + g.x
            cut_rows.append(g)
            cut_rhs.append(cs.constraints[ci].epsilon - vals[ci]
                           + float(g @ xvec))
            cut_src.append(int(ci))

    report.status = "iteration_limit"
    report.iterations = options.max_iters
    report.n_cuts = len(cut_rows)
    report.objective = last_obj
    report.message = ("no convergence within %d iterations"
                      % options.max_iters)
    report.wall_time_s = time.perf_counter() - t0
    return report
