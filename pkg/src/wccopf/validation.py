"""Out-of-sample Monte-Carlo audit of a scheduling decision.

The solver certifies expected overloads through quadrature; this module
re-checks them the blunt way, by simulating the full control chain on
fresh deviation draws and averaging the realized overloads.  It also
collects the wind-side summary statistics (curtailment split into spilled
and withheld energy, capped-output moments) that describe a dispatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stochastics import _psd_factor, capped_moments
from .wind_model import Decision

__all__ = ["ConstraintCheck", "PlantCurtailment", "ValidationReport",
           "validate_dispatch", "capped_output_moments"]


def capped_output_moments(std: float, cap: float):
    """Mean shift and standard deviation of min(w, cap), w ~ N(0, std^2).

    The mean shift is what capping subtracts from the plant's expected
    output; the standard deviation shows how much the cap calms it.
    """
    mean, std_out, _ = capped_moments(std, cap)
    return mean, std_out


@dataclass
class ConstraintCheck:
    label: str
    family: str
    index: int
    epsilon: float
    expected_overload_mw: float
    stderr_mw: float
    violation_probability: float
    ok: bool

    def to_dict(self):
        return {
            "label": self.label,
            "family": self.family,
            "index": self.index,
            "epsilon": self.epsilon,
            "expected_overload_mw": self.expected_overload_mw,
            "stderr_mw": self.stderr_mw,
            "violation_probability": self.violation_probability,
            "ok": self.ok,
        }


@dataclass
class PlantCurtailment:
    bus: int
    policy: str
    withheld_mw: float          # forecast minus set-point, reserve headroom
    spilled_mw: float           # energy clipped away above the cap
    spilled_stderr_mw: float
    total_mw: float

    def to_dict(self):
        return {
            "bus": self.bus,
            "policy": self.policy,
            "withheld_mw": self.withheld_mw,
            "spilled_mw": self.spilled_mw,
            "spilled_stderr_mw": self.spilled_stderr_mw,
            "total_mw": self.total_mw,
        }


@dataclass
class ValidationReport:
    n_samples: int
    seed: int
    constraints: list = field(default_factory=list)
    curtailment: list = field(default_factory=list)
    total_withheld_mw: float = 0.0
    total_spilled_mw: float = 0.0
    total_curtailment_mw: float = 0.0
    max_excess_mw: float = 0.0
    all_ok: bool = False

    def failed(self):
        return [c for c in self.constraints if not c.ok]

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "all_ok": self.all_ok,
            "max_excess_mw": self.max_excess_mw,
            "total_withheld_mw": self.total_withheld_mw,
            "total_spilled_mw": self.total_spilled_mw,
            "total_curtailment_mw": self.total_curtailment_mw,
            "constraints": [c.to_dict() for c in self.constraints],
            "curtailment": [c.to_dict() for c in self.curtailment],
        }


def _stderr(s1, s2, n):
    mean = s1 / n
    if n < 2:
        return mean, np.zeros_like(mean)
    var = np.maximum(s2 / n - mean * mean, 0.0) * (n / (n - 1.0))
    return mean, np.sqrt(var / n)


def validate_dispatch(problem, x: Decision, n_samples: int = 100_000,
                      seed: int = 0, chunk: int = 16384) -> ValidationReport:
    """Empirical expected overload of every constraint at the decision.

    Samples the deviation vector, replays controlled wind output, AGC
    response and line flows, and compares the averaged overloads against
    the budgets.  A constraint passes when its empirical mean stays below
    epsilon + 3 standard errors.  Deterministic for a fixed seed, and the
    draw stream does not depend on the chunk size.
    """
    cs = problem.constraints
    fleet = problem.fleet
    n = int(n_samples)
    if n < 1:
        raise ValueError("n_samples must be positive")

    R = cs.R
    ag = x.alpha_g
    awR = x.alpha_w[R]
    r_up_g, r_dn_g = x.r_up_g, x.r_dn_g
    r_up_wR, r_dn_wR = x.r_up_w[R], x.r_dn_w[R]
    avail_base = x.r_dn_w[R] - x.v[R]
    flow0 = cs._base_flow(x)
    mbar = cs.Mresp @ cs._resp_alpha(x)
    limits = cs.limits

    nC = cs.n_constraints
    s1 = np.zeros(nC)
    s2 = np.zeros(nC)
    cnt = np.zeros(nC)
    ci = fleet.cap_idx
    spill1 = np.zeros(len(ci))
    spill2 = np.zeros(len(ci))

    L = _psd_factor(fleet.covariance)
    rng = np.random.Generator(np.random.Philox(key=seed))
    fam = cs._fam_ofs

    def add(sl, y):
        pos = np.maximum(y, 0.0)
        s1[sl] += pos.sum(axis=0)
        s2[sl] += np.einsum("ij,ij->j", pos, pos)
        cnt[sl] += (y > 0.0).sum(axis=0)

    done = 0
    while done < n:
        ns = min(chunk, n - done)
        om = rng.standard_normal((ns, fleet.n_plants)) @ L.T
        xi = fleet.capped_deviations(om)
        Om = xi.sum(axis=1)

        add(fam["gen_reserve_up"], -Om[:, None] * ag[None, :] - r_up_g)
        add(fam["gen_reserve_down"], Om[:, None] * ag[None, :] - r_dn_g)
        add(fam["wind_reserve_up"], -Om[:, None] * awR[None, :] - r_up_wR)
        add(fam["wind_reserve_down"], Om[:, None] * awR[None, :] - r_dn_wR)
        add(fam["wind_availability"], avail_base[None, :] - om[:, R])

        F = flow0[None, :] + xi @ cs.Mw_c.T - Om[:, None] * mbar[None, :]
        add(fam["line_upper"], F - limits[None, :])
        add(fam["line_lower"], -F - limits[None, :])

        if len(ci):
            sp = np.maximum(om[:, ci] - fleet.caps[None, :], 0.0)
            spill1 += sp.sum(axis=0)
            spill2 += np.einsum("ij,ij->j", sp, sp)
        done += ns

    mean, se = _stderr(s1, s2, n)
    prob_viol = cnt / n
    checks = []
    excess = -math.inf
    for i, c in enumerate(cs.constraints):
        slack = c.epsilon + 3.0 * se[i]
        checks.append(ConstraintCheck(
            label=c.label(), family=c.family, index=c.index,
            epsilon=c.epsilon,
            expected_overload_mw=float(mean[i]), stderr_mw=float(se[i]),
            violation_probability=float(prob_viol[i]),
            ok=bool(mean[i] <= slack)))
        excess = max(excess, float(mean[i] - slack))

    spill_mean, spill_se = _stderr(spill1, spill2, n)
    cap_pos = {int(j): k for k, j in enumerate(ci)}
    rows = []
    for j, p in enumerate(fleet.plants):
        withheld = max(float(p.mean_mw - x.v[j]), 0.0)
        spilled = spilled_se = 0.0
        if j in cap_pos:
            spilled = float(spill_mean[cap_pos[j]])
            spilled_se = float(spill_se[cap_pos[j]])
        rows.append(PlantCurtailment(
            bus=p.bus, policy=p.policy, withheld_mw=withheld,
            spilled_mw=spilled, spilled_stderr_mw=spilled_se,
            total_mw=withheld + spilled))

    report = ValidationReport(
        n_samples=n, seed=seed, constraints=checks, curtailment=rows,
        total_withheld_mw=float(sum(r.withheld_mw for r in rows)),
        total_spilled_mw=float(sum(r.spilled_mw for r in rows)),
        max_excess_mw=excess if checks else 0.0,
        all_ok=all(c.ok for c in checks))
    report.total_curtailment_mw = (report.total_withheld_mw
                                   + report.total_spilled_mw)
    return report
