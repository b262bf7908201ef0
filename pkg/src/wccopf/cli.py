"""Command line front end.

Four subcommands cover the case-study workflows: ``solve`` runs one
dispatch and writes the report as JSON, ``sweep-penetration`` and
``sweep-caps`` tabulate solve metrics over a grid as CSV, and
``validate`` re-checks a previously written dispatch by Monte Carlo.

Every flag can also be supplied through the environment with the
``WCCOPF_`` prefix (dashes become underscores, e.g. ``WCCOPF_MAX_ITERS``);
an explicit flag wins over the environment.  Outputs carry no timestamps
or timing, so a rerun with the same inputs and seed is byte-identical.

Exit codes: 0 success, 1 input or I/O error, 2 infeasible, 3 iteration
limit, 4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from .case_io import (MatpowerParseError, WindConfigError, load_case_file,
                      load_wind_file, apply_stress_modifiers)
from .solver import SolverOptions, build_problem, solve_wcc_opf
from .validation import validate_dispatch
from .wind_model import (Decision, WindFleet, WindPlant, build_fleet,
                         scale_to_penetration)

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_ITERATION_LIMIT = 3
EXIT_VALIDATION = 4

_STATUS_EXIT = {
    "converged": EXIT_OK,
    "infeasible": EXIT_INFEASIBLE,
    "iteration_limit": EXIT_ITERATION_LIMIT,
}

_ENV_PREFIX = "WCCOPF_"

_SWEEP_COLUMNS = ["total_cost", "cost_energy_gen", "cost_energy_wind",
                  "cost_reserve_gen", "cost_reserve_wind", "total_wind_mw",
                  "total_reserve_mw", "expected_curtailment_mw"]


class CliError(Exception):
    """Bad arguments or inputs; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which this tool reserves for
    # infeasible problems
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _env(name, default):
    return os.environ.get(_ENV_PREFIX + name.replace("-", "_").upper(),
                          default)


def _add_common(p: _Parser):
    p.add_argument("--case", default=_env("case", None),
                   help="MATPOWER case file (default: bundled 118-bus case)")
    p.add_argument("--wind", default=_env("wind", None),
                   help="wind fleet JSON (default: bundled 25-plant fleet)")
    p.add_argument("--penetration", type=float,
                   default=float(_env("penetration", 75.0)),
                   help="forecast wind as %% of stressed load (default 75)")
    p.add_argument("--epsilon", type=float,
                   default=float(_env("epsilon", 0.1)),
                   help="expected-overload budget in MW (default 0.1)")
    p.add_argument("--load-factor", type=float,
                   default=float(_env("load-factor", 1.25)),
                   help="load stress multiplier (default 1.25)")
    p.add_argument("--limit-factor", type=float,
                   default=float(_env("limit-factor", 0.75)),
                   help="line limit stress multiplier (default 0.75)")
    p.add_argument("--caps", default=_env("caps", ""),
                   help="cap overrides as bus=mw pairs, e.g. 85=-45,117=-45")
    p.add_argument("--no-wind-reserves", action="store_true",
                   default=_env("no-wind-reserves", "") not in ("", "0"),
                   help="wind plants neither respond nor hold reserves")
    p.add_argument("--seed", type=int, default=int(_env("seed", 0)),
                   help="seed for sampling-based steps (default 0)")
    p.add_argument("--out", default=_env("out", None),
                   help="output path (default: stdout)")
    p.add_argument("--tol", type=float, default=float(_env("tol", 1e-4)),
                   help="feasibility tolerance in MW (default 1e-4)")
    p.add_argument("--max-iters", type=int,
                   default=int(_env("max-iters", 500)),
                   help="cutting-plane iteration cap (default 500)")
    p.add_argument("--samples", type=int,
                   default=int(_env("samples", 100_000)),
                   help="Monte-Carlo sample count for validate")


def build_parser() -> _Parser:
    parser = _Parser(prog="wccopf",
                     description="Stochastic DC dispatch with expected-"
                                 "overload limits on every constraint.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[], help="solve one dispatch")
    _add_common(p)

    p = sub.add_parser("sweep-penetration",
                       help="solve over a list of penetration levels")
    _add_common(p)
    p.add_argument("--penetrations",
                   default=_env("penetrations", "25,50,75,100,125"),
                   help="comma-separated %% levels (default 25,50,75,100,125)")

    p = sub.add_parser("sweep-caps",
                       help="solve over a two-plant grid of cap thresholds")
    _add_common(p)
    p.add_argument("--cap-buses", default=_env("cap-buses", ""),
                   help="two bus ids (default: the two largest-sigma plants)")
    p.add_argument("--cap-range", default=_env("cap-range", "-75:75:15"),
                   help="grid as lo:hi:step in MW (default -75:75:15)")

    p = sub.add_parser("validate",
                       help="Monte-Carlo audit of a solved dispatch")
    _add_common(p)
    p.add_argument("--dispatch", required=True,
                   help="report JSON written by the solve command")
    return parser


# ---------------------------------------------------------------------------
# shared plumbing

def _bundled(name):
    return resources.files("wccopf") / "data" / name


def _load_network(args):
    try:
        if args.case is None:
            with resources.as_file(_bundled("ieee118.m")) as p:
                net = load_case_file(p)
        else:
            net = load_case_file(args.case)
    except (OSError, MatpowerParseError) as exc:
        raise CliError("cannot load case: %s" % exc)
    return apply_stress_modifiers(net, load_factor=args.load_factor,
                                  limit_factor=args.limit_factor)


def _load_fleet(args, net):
    try:
        if args.wind is None:
            with resources.as_file(_bundled("wind25.json")) as p:
                cfg = load_wind_file(p, net)
        else:
            cfg = load_wind_file(args.wind, net)
    except (OSError, WindConfigError) as exc:
        raise CliError("cannot load wind config: %s" % exc)
    fleet = build_fleet(cfg, net)
    if args.penetration is None:
        return fleet
    return scale_to_penetration(fleet, net.total_load, args.penetration)


def parse_caps(text) -> dict:
    caps = {}
    if not text:
        return caps
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            bus, val = item.split("=")
            caps[int(bus)] = float(val)
        except ValueError:
            raise CliError("bad cap entry %r, expected bus=mw" % item)
    return caps


def _override_fleet(fleet: WindFleet, caps: dict,
                    no_wind_reserves: bool) -> WindFleet:
    caps = dict(caps)
    plants = []
    for p in fleet.plants:
        policy, cap = p.policy, p.cap_mw
        if p.bus in caps:
            policy, cap = "cap", caps.pop(p.bus)
        elif no_wind_reserves and policy == "reserve":
            policy, cap = "mean_only", None
        plants.append(WindPlant(p.bus, p.mean_mw, p.std_mw, policy, cap))
    if caps:
        raise CliError("cap buses without a wind plant: %s"
                       % sorted(caps))
    return WindFleet(plants, fleet.correlation, fleet.seed)


def _solve_one(args, net, fleet):
    prob = build_problem(net, fleet, epsilon=args.epsilon)
    opts = SolverOptions(tol_feas=args.tol, max_iters=args.max_iters)
    return prob, solve_wcc_opf(prob, opts)


def _config_block(args):
    return {
        "case": args.case or "bundled:ieee118.m",
        "wind": args.wind or "bundled:wind25.json",
        "penetration": args.penetration,
        "epsilon": args.epsilon,
        "load_factor": args.load_factor,
        "limit_factor": args.limit_factor,
        "caps": {str(b): v for b, v in
                 sorted(parse_caps(args.caps).items())},
        "no_wind_reserves": bool(args.no_wind_reserves),
        "tol": args.tol,
        "max_iters": args.max_iters,
        "seed": args.seed,
    }


def _write(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_out(args, payload):
    _write(args, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _metric_row(report):
    if not report.converged:
        return [""] * len(_SWEEP_COLUMNS)
    vals = [report.objective, report.cost_energy_gen,
            report.cost_energy_wind, report.cost_reserve_gen,
            report.cost_reserve_wind, report.total_wind_mw,
            report.total_reserve_mw,
            report.curtailment_forecast_mw + report.expected_cap_spill_mw]
    return ["%.6f" % v for v in vals]


def _sweep_exit(statuses):
    if all(s == "converged" for s in statuses):
        return EXIT_OK
    if any(s == "infeasible" for s in statuses):
        return EXIT_INFEASIBLE
    return EXIT_ITERATION_LIMIT


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    net = _load_network(args)
    fleet = _override_fleet(_load_fleet(args, net), parse_caps(args.caps),
                            args.no_wind_reserves)
    _, report = _solve_one(args, net, fleet)
    payload = report.to_dict()
    payload.pop("wall_time_s", None)
    payload["config"] = _config_block(args)
    _json_out(args, payload)
    if not report.converged:
        print("solve: %s: %s" % (report.status, report.message),
              file=sys.stderr)
    return _STATUS_EXIT.get(report.status, EXIT_INPUT)


def cmd_sweep_penetration(args) -> int:
    try:
        levels = [float(s) for s in args.penetrations.split(",") if s.strip()]
    except ValueError:
        raise CliError("bad --penetrations list %r" % args.penetrations)
    net = _load_network(args)
    lines = [",".join(["penetration", "status"] + _SWEEP_COLUMNS)]
    statuses = []
    for x in levels:
        args.penetration = x
        fleet = _override_fleet(_load_fleet(args, net),
                                parse_caps(args.caps),
                                args.no_wind_reserves)
        _, report = _solve_one(args, net, fleet)
        statuses.append(report.status)
        lines.append(",".join(["%g" % x, report.status]
                              + _metric_row(report)))
    _write(args, "\n".join(lines) + "\n")
    return _sweep_exit(statuses)


def cmd_sweep_caps(args) -> int:
    net = _load_network(args)
    fleet = _override_fleet(_load_fleet(args, net), parse_caps(args.caps),
                            args.no_wind_reserves)
    if args.cap_buses:
        try:
            buses = [int(s) for s in args.cap_buses.split(",") if s.strip()]
        except ValueError:
            raise CliError("bad --cap-buses list %r" % args.cap_buses)
    else:
        order = np.argsort(fleet.stds)
        buses = sorted(int(fleet.plants[j].bus) for j in order[-2:])
    if len(buses) != 2:
        raise CliError("cap sweep needs exactly two buses")
    try:
        lo, hi, step = (float(s) for s in args.cap_range.split(":"))
    except ValueError:
        raise CliError("bad --cap-range %r, expected lo:hi:step"
                       % args.cap_range)
    if step <= 0 or hi < lo:
        raise CliError("bad --cap-range %r" % args.cap_range)
    grid = np.arange(lo, hi + 0.5 * step, step)

    head = ["cap_%d_mw" % buses[0], "cap_%d_mw" % buses[1], "status"]
    lines = [",".join(head + _SWEEP_COLUMNS)]
    statuses = []
    for c1 in grid:
        for c2 in grid:
            swept = _override_fleet(fleet,
                                    {buses[0]: float(c1), buses[1]: float(c2)},
                                    False)
            _, report = _solve_one(args, net, swept)
            statuses.append(report.status)
            lines.append(",".join(["%g" % c1, "%g" % c2, report.status]
                                  + _metric_row(report)))
    _write(args, "\n".join(lines) + "\n")
    return _sweep_exit(statuses)


def cmd_validate(args) -> int:
    try:
        with open(args.dispatch) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("cannot read dispatch: %s" % exc)
    if "decision" not in payload:
        raise CliError("dispatch JSON carries no decision block")

    cfg = payload.get("config", {})
    for name in ("penetration", "epsilon", "load_factor", "limit_factor"):
        if cfg.get(name) is not None:
            setattr(args, name.replace("-", "_"), float(cfg[name]))
    caps = {int(b): float(v) for b, v in cfg.get("caps", {}).items()}
    if not args.caps:
        args.caps = ",".join("%d=%g" % (b, v)
                             for b, v in sorted(caps.items()))
    no_wres = bool(cfg.get("no_wind_reserves", False)) \
        or args.no_wind_reserves

    net = _load_network(args)
    fleet = _override_fleet(_load_fleet(args, net), parse_caps(args.caps),
                            no_wres)
    prob = build_problem(net, fleet, epsilon=args.epsilon)

    dec = payload["decision"]
    try:
        x = Decision(**{name: np.asarray(dec[name], dtype=float)
                        for name in ("p", "v", "alpha_g", "alpha_w",
                                     "r_up_g", "r_dn_g", "r_up_w",
                                     "r_dn_w")})
    except (KeyError, TypeError) as exc:
        raise CliError("malformed decision block: %s" % exc)
    if len(x.p) != net.n_gen or len(x.v) != fleet.n_plants:
        raise CliError("dispatch dimensions do not match the case "
                       "(%d gens / %d plants vs %d / %d)"
                       % (len(x.p), len(x.v), net.n_gen, fleet.n_plants))

    report = validate_dispatch(prob, x, n_samples=args.samples,
                               seed=args.seed)
    _json_out(args, report.to_dict())
    if not report.all_ok:
        bad = report.failed()
        worst = max(bad, key=lambda c: c.expected_overload_mw - c.epsilon)
        print("validate: %d constraint(s) above budget, worst %s"
              % (len(bad), worst.label), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "solve": cmd_solve,
            "sweep-penetration": cmd_sweep_penetration,
            "sweep-caps": cmd_sweep_caps,
            "validate": cmd_validate,
        }[args.command]
        return handler(args)
    except CliError as exc:
        print("wccopf: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print("wccopf: %s" % exc, file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
