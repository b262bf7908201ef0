"""Generate the bundled 118-bus study system and the 25-plant wind fleet.

The topology (bus numbering, branch list, generator locations) follows the
well-known public 118-bus test system.  Impedances, loads, cost coefficients
and thermal ratings are synthesized deterministically from a fixed seed, with
ratings calibrated against DC base-case flows so that the stressed variant of
the system (scaled loads, derated limits) is feasible but moderately
congested.  The output files are committed under src/wccopf/data/ and the
package treats them as static inputs.

Run from the repository root:

    python3 scripts/make_dataset.py
"""

import json
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(HERE, "..", "src", "wccopf", "data")

N_BUS = 118
BASE_MVA = 100.0
TOTAL_LOAD_MW = 4242.0
SLACK_BUS = 69

# Branch list of the public 118-bus network.  Pairs appearing twice are the
# double-circuit corridors.  Transformers are kept in this list as ordinary
# branches; the DC model only needs the series reactance.
BRANCHES = [
    (1, 2), (1, 3), (4, 5), (3, 5), (5, 6), (6, 7), (8, 9), (8, 5),
    (9, 10), (4, 11), (5, 11), (11, 12), (2, 12), (3, 12), (7, 12),
    (11, 13), (12, 14), (13, 15), (14, 15), (12, 16), (15, 17), (16, 17),
    (17, 18), (18, 19), (19, 20), (15, 19), (20, 21), (21, 22), (22, 23),
    (23, 24), (23, 25), (26, 25), (25, 27), (27, 28), (28, 29), (30, 17),
    (8, 30), (26, 30), (17, 31), (29, 31), (23, 32), (31, 32), (27, 32),
    (15, 33), (19, 34), (35, 36), (35, 37), (33, 37), (34, 36), (34, 37),
    (38, 37), (37, 39), (37, 40), (30, 38), (39, 40), (40, 41), (40, 42),
    (41, 42), (43, 44), (34, 43), (44, 45), (45, 46), (46, 47), (46, 48),
    (47, 49), (42, 49), (42, 49), (45, 49), (48, 49), (49, 50), (49, 51),
    (51, 52), (52, 53), (53, 54), (49, 54), (49, 54), (54, 55), (54, 56),
    (55, 56), (56, 57), (50, 57), (56, 58), (51, 58), (54, 59), (56, 59),
    (56, 59), (55, 59), (59, 60), (59, 61), (60, 61), (60, 62), (61, 62),
    (63, 59), (63, 64), (64, 61), (38, 65), (64, 65), (49, 66), (49, 66),
    (62, 66), (62, 67), (65, 66), (66, 67), (65, 68), (47, 69), (49, 69),
    (68, 69), (69, 70), (24, 70), (70, 71), (24, 72), (71, 72), (71, 73),
    (70, 74), (70, 75), (69, 75), (74, 75), (76, 77), (69, 77), (75, 77),
    (77, 78), (78, 79), (77, 80), (77, 80), (79, 80), (68, 81), (81, 80),
    (77, 82), (82, 83), (83, 84), (83, 85), (84, 85), (85, 86), (86, 87),
    (85, 88), (85, 89), (88, 89), (89, 90), (89, 90), (90, 91), (89, 92),
    (89, 92), (91, 92), (92, 93), (92, 94), (93, 94), (94, 95), (80, 96),
    (82, 96), (94, 96), (80, 97), (80, 98), (80, 99), (92, 100), (94, 100),
    (95, 96), (96, 97), (98, 100), (99, 100), (100, 101), (92, 102),
    (101, 102), (100, 103), (100, 104), (103, 104), (103, 105), (100, 106),
    (104, 105), (105, 106), (105, 107), (105, 108), (106, 107), (108, 109),
    (103, 110), (109, 110), (110, 111), (110, 112), (17, 113), (32, 113),
    (32, 114), (27, 115), (114, 115), (68, 116), (12, 117), (75, 118),
    (76, 118),
]

# Transformer branches get a slightly different reactance range.
TRANSFORMERS = {(8, 5), (26, 25), (30, 17), (38, 37), (63, 59), (64, 61),
                (65, 66), (68, 69), (81, 80)}

GEN_BUSES = [1, 4, 6, 8, 10, 12, 15, 18, 19, 24, 25, 26, 27, 31, 32, 34,
             36, 40, 42, 46, 49, 54, 55, 56, 59, 61, 62, 65, 66, 69, 70,
             72, 73, 74, 76, 77, 80, 85, 87, 89, 90, 91, 92, 99, 100, 103,
             104, 105, 107, 110, 111, 112, 113, 116]

# Nameplate ratings of the large units; every other unit is 100 MW.
BIG_UNITS = {10: 550, 12: 185, 25: 320, 26: 414, 31: 107, 46: 119, 49: 304,
             54: 148, 59: 255, 61: 260, 65: 491, 66: 492, 69: 805, 80: 577,
             87: 104, 89: 707, 100: 352, 103: 140, 111: 136}

# Buses that carry no load (generator-only or switching stations).
ZERO_LOAD_BUSES = {5, 9, 10, 25, 26, 30, 37, 38, 61, 63, 64, 65, 68, 71,
                   81, 87, 89, 111}

# Heavier load pockets are emphasised so flow patterns are uneven.
HEAVY_LOAD_BUSES = {11, 15, 42, 49, 54, 56, 59, 60, 62, 66, 78, 80, 90,
                    94, 95, 100, 116, 117, 118}

WIND_BUSES = [3, 8, 11, 20, 24, 26, 31, 38, 43, 49, 53, 59, 63, 66, 70,
              74, 77, 80, 83, 85, 90, 96, 100, 105, 117]
WIND_MEANS = {85: 320.0, 117: 290.0}
WIND_CORR_LENGTH = 40.0

# Load/limit multipliers of the stressed study variant; ratings are
# calibrated so that variant remains feasible.
STRESS_LOAD = 1.25
STRESS_LIMIT = 0.75
PENETRATION_REF = 75.0


def build_reactances(rng):
    xs = []
    for (f, t) in BRANCHES:
        if (f, t) in TRANSFORMERS:
            x = rng.uniform(0.02, 0.06)
        else:
            x = rng.uniform(0.03, 0.18)
        xs.append(round(x, 4))
    return xs


def build_loads(rng):
    weights = np.zeros(N_BUS)
    for b in range(1, N_BUS + 1):
        if b in ZERO_LOAD_BUSES:
            continue
        w = rng.uniform(0.4, 1.6)
        if b in HEAVY_LOAD_BUSES:
            w *= 3.0
        weights[b - 1] = w
    loads = weights / weights.sum() * TOTAL_LOAD_MW
    return np.round(loads, 1)


def build_costs(rng, pmax):
    # Merit order: big units cheap, small units expensive, with jitter so
    # no two units tie exactly.
    costs = []
    for p in pmax:
        c = 14.0 + 26.0 * (120.0 / (p + 120.0)) + rng.uniform(0.0, 3.0)
        costs.append(round(c, 2))
    return costs


def dc_flows(xs, injections_mw):
    """Reference-bus DC solve used only for rating calibration."""
    nl = len(BRANCHES)
    b_series = 1.0 / np.asarray(xs)
    A = np.zeros((nl, N_BUS))
    for k, (f, t) in enumerate(BRANCHES):
        A[k, f - 1] = 1.0
        A[k, t - 1] = -1.0
    Bbus = A.T @ (b_series[:, None] * A)
    keep = [b for b in range(N_BUS) if b != SLACK_BUS - 1]
    inj = np.asarray(injections_mw) / BASE_MVA
    theta = np.zeros(N_BUS)
    theta[keep] = np.linalg.solve(Bbus[np.ix_(keep, keep)], inj[keep])
    return b_series * (A @ theta) * BASE_MVA


def proportional_dispatch(pmax, demand_total):
    pmax = np.asarray(pmax, dtype=float)
    return pmax * (demand_total / pmax.sum())


def make_case():
    rng = np.random.default_rng(118)
    xs = build_reactances(rng)
    loads = build_loads(rng)
    pmax = [float(BIG_UNITS.get(b, 100)) for b in GEN_BUSES]
    costs = build_costs(rng, pmax)

    wind_rng = np.random.default_rng(25)
    means = {}
    for b in WIND_BUSES:
        means[b] = WIND_MEANS.get(b, round(wind_rng.uniform(60.0, 180.0), 1))

    # Base-case injections: proportional dispatch against nominal load.
    inj_load = np.zeros(N_BUS)
    inj_load -= loads
    disp = proportional_dispatch(pmax, loads.sum())
    for g, p in zip(GEN_BUSES, disp):
        inj_load[g - 1] += p
    f_load = dc_flows(xs, inj_load)

    # Second scenario: wind fleet at its reference-penetration forecast,
    # thermal dispatch scaled down to keep balance.  Ratings must cover the
    # evacuation paths of the wind buses, otherwise the stressed variant has
    # no feasible dispatch at all.
    scale = loads.sum() / sum(means.values()) * (PENETRATION_REF / 100.0)
    inj_wind = np.zeros(N_BUS)
    inj_wind -= loads
    wind_total = 0.0
    for b, m in means.items():
        inj_wind[b - 1] += m * scale
        wind_total += m * scale
    disp2 = proportional_dispatch(pmax, loads.sum() - wind_total)
    for g, p in zip(GEN_BUSES, disp2):
        inj_wind[g - 1] += p
    f_wind = dc_flows(xs, inj_wind)

    # Stressed loads scale flows by roughly STRESS_LOAD while limits shrink
    # by STRESS_LIMIT, so the margin factor must exceed
    # STRESS_LOAD / STRESS_LIMIT ~ 1.67 plus room for reserve activation.
    margin = 2.6
    rate = np.maximum(100.0, np.abs(f_load) * margin)
    rate = np.maximum(rate, np.abs(f_wind) * margin)
    rate = np.ceil(rate / 10.0) * 10.0

    lines = []
    for k, (f, t) in enumerate(BRANCHES):
        lines.append((f, t, xs[k], rate[k]))

    return loads, lines, pmax, costs, means


def fmt(v):
    s = repr(float(v))
    return s


def write_case(path, loads, lines, pmax, costs):
    gen_bus_set = set(GEN_BUSES)
    out = []
    out.append("function mpc = ieee118")
    out.append("% Synthetic 118-bus study system.")
    out.append("% Topology and unit placement follow the public 118-bus")
    out.append("% network; impedances, loads, costs and ratings are")
    out.append("% deterministically synthesized (scripts/make_dataset.py).")
    out.append("mpc.version = '2';")
    out.append("")
    out.append("mpc.baseMVA = %s;" % fmt(BASE_MVA))
    out.append("")
    out.append("%% bus data")
    out.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    out.append("mpc.bus = [")
    for b in range(1, N_BUS + 1):
        if b == SLACK_BUS:
            btype = 3
        elif b in gen_bus_set:
            btype = 2
        else:
            btype = 1
        out.append("\t%d\t%d\t%s\t0\t0\t0\t1\t1\t0\t138\t1\t1.06\t0.94;"
                   % (b, btype, fmt(loads[b - 1])))
    out.append("];")
    out.append("")
    out.append("%% generator data")
    out.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin")
    out.append("mpc.gen = [")
    for g, p in zip(GEN_BUSES, pmax):
        out.append("\t%d\t0\t0\t300\t-300\t1\t%s\t1\t%s\t0;"
                   % (g, fmt(BASE_MVA), fmt(p)))
    out.append("];")
    out.append("")
    out.append("%% branch data")
    out.append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus")
    out.append("mpc.branch = [")
    for (f, t, x, rate) in lines:
        out.append("\t%d\t%d\t0\t%s\t0\t%s\t0\t0\t0\t0\t1;"
                   % (f, t, fmt(x), fmt(rate)))
    out.append("];")
    out.append("")
    out.append("%% generator cost data (linear)")
    out.append("%\tmodel\tstartup\tshutdown\tn\tc1\tc0")
    out.append("mpc.gencost = [")
    for c in costs:
        out.append("\t2\t0\t0\t2\t%s\t0;" % fmt(c))
    out.append("];")
    out.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


def write_wind(path, means):
    plants = []
    for b in WIND_BUSES:
        plants.append({
            "bus": b,
            "mean_mw": means[b],
            "std_fraction": 0.10,
            "policy": {"type": "reserve"},
        })
    n = len(WIND_BUSES)
    corr = [[0.0] * n for _ in range(n)]
    for i, bi in enumerate(WIND_BUSES):
        for j, bj in enumerate(WIND_BUSES):
            corr[i][j] = round(math.exp(-abs(bi - bj) / WIND_CORR_LENGTH), 6)
    doc = {
        "plants": plants,
        "correlation": corr,
        "seed": 2025,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def main():
    assert len(BRANCHES) == 186, len(BRANCHES)
    assert len(GEN_BUSES) == 54, len(GEN_BUSES)
    assert len(WIND_BUSES) == 25
    # Connectivity check.
    adj = {b: set() for b in range(1, N_BUS + 1)}
    for (f, t) in BRANCHES:
        adj[f].add(t)
        adj[t].add(f)
    seen = {1}
    stack = [1]
    while stack:
        b = stack.pop()
        for nb in adj[b]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    assert len(seen) == N_BUS, "network must be connected"

    loads, lines, pmax, costs, means = make_case()
    assert abs(loads.sum() - TOTAL_LOAD_MW) < 1.0
    os.makedirs(DATA_DIR, exist_ok=True)
    write_case(os.path.join(DATA_DIR, "ieee118.m"), loads, lines, pmax, costs)
    write_wind(os.path.join(DATA_DIR, "wind25.json"), means)
    print("wrote ieee118.m (%d buses, %d branches, %d generators)"
          % (N_BUS, len(lines), len(GEN_BUSES)))
    print("wrote wind25.json (%d plants, %.1f MW forecast total)"
          % (len(WIND_BUSES), sum(means.values())))


if __name__ == "__main__":
    main()
