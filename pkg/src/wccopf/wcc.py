"""Weighted chance constraints on the scheduling decision.

Each constraint bounds an expected overload in MW: E[max(y(x, w), 0)] <= eps,
where y is the violation magnitude of one physical limit under the random
deviation vector w.  Families:

* ``gen_reserve_up`` / ``gen_reserve_down``   - a generator's activated
  regulation exceeding its procured reserve band,
* ``wind_reserve_up`` / ``wind_reserve_down`` - the same for responding
  wind plants,
* ``wind_availability``                       - a responding plant unable
  to back its down-reserve with actual production,
* ``line_upper`` / ``line_lower``             - flow beyond a thermal
  limit in either direction.

Every family's y is affine in the (possibly clipped) deviations with
coefficients affine in the decision, so the expected overload is convex in
the decision and supports exact subgradients for cutting planes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .case_io import Network
from .dc_network import PtdfMatrix
from .stochastics import (CapQuadrature, expected_positive_part,
                          positive_part_slopes, _TINY_STD)
from .wind_model import Decision, DecisionLayout, WindFleet

__all__ = ["FAMILIES", "EpsilonConfig", "WccConstraint", "ConstraintSet",
           "build_constraints", "evaluate", "gradient"]

FAMILIES = ("gen_reserve_up", "gen_reserve_down", "wind_reserve_up",
            "wind_reserve_down", "wind_availability", "line_upper",
            "line_lower")

# cache per-node line constants up to this many floats (~200 MB)
_CACHE_LIMIT = 25_000_000


@dataclass
class EpsilonConfig:
    """Expected-overload budgets in MW, resolved most-specific-first."""
    default: float = 0.1
    per_family: dict = field(default_factory=dict)
    per_constraint: dict = field(default_factory=dict)

    def resolve(self, family: str, index: int) -> float:
        if (family, index) in self.per_constraint:
            return float(self.per_constraint[(family, index)])
        if family in self.per_family:
            return float(self.per_family[family])
        return float(self.default)


@dataclass(frozen=True)
class WccConstraint:
    family: str
    index: int          # device index within its family's collection
    epsilon: float

    def label(self) -> str:
        return "%s[%d]" % (self.family, self.index)


class ConstraintSet:
    """All weighted chance constraints of one problem instance.

    Precomputes the pieces that depend only on network, fleet and caps so
    repeated evaluation during cutting-plane iterations stays cheap.
    """

    def __init__(self, net: Network, fleet: WindFleet, ptdf: PtdfMatrix,
                 epsilon=None, quad_nodes: int = 32, qmc_log2: int = 16,
                 qmc_seed: int = 7):
        if epsilon is None:
            epsilon = EpsilonConfig()
        elif not isinstance(epsilon, EpsilonConfig):
            epsilon = EpsilonConfig(default=float(epsilon))
        self.net = net
        self.fleet = fleet
        self.ptdf = ptdf
        self.epsilon = epsilon
        self.layout = DecisionLayout(net.n_gen, fleet.n_plants)

        nG = net.n_gen
        nW = fleet.n_plants
        gi = net.gen_bus_indices()
        wi = np.array([net.bus_index(p.bus) for p in fleet.plants], dtype=int)
        M = ptdf.matrix
        self.Mg = M[:, gi]
        self.Mw = M[:, wi]
        self.d_flow = M @ net.loads_mw

        self.R = fleet.reserve_idx
        self.Sigma = fleet.covariance
        self.stds = fleet.stds
        self.flow_shift = self.Mw @ fleet.cap_shift

        # finite-limit lines carry flow constraints
        limits = np.array([ln.limit_mw for ln in net.lines])
        self.line_sel = np.where(np.isfinite(limits))[0]
        self.limits = limits[self.line_sel]
        self.Mg_c = self.Mg[self.line_sel]
        self.Mw_c = self.Mw[self.line_sel]
        self.d_flow_c = self.d_flow[self.line_sel]
        self.flow_shift_c = self.flow_shift[self.line_sel]
        self.Mresp = np.hstack([self.Mg_c, self.Mw_c[:, self.R]])

        # plain-Gaussian pieces
        S1 = self.Sigma.sum(axis=1)
        self.sigma_sq_total = float(self.Sigma.sum())
        self.sigma_total = math.sqrt(max(self.sigma_sq_total, 0.0))
        MwS = self.Mw_c @ self.Sigma
        self.MwS = MwS
        self.line_var_const = np.einsum("lj,lj->l", MwS, self.Mw_c)
        self.line_var_lin = self.Mw_c @ S1

        # clipped-fleet pieces
        self.cap_idx = fleet.effective_cap_idx()
        self.quad = None
        if len(self.cap_idx):
            caps_eff = np.array(
                [fleet.plants[j].cap_mw for j in self.cap_idx])
            self.quad = CapQuadrature(self.Sigma, self.cap_idx, caps_eff,
                                      nodes=quad_nodes, qmc_log2=qmc_log2,
                                      qmc_seed=qmc_seed)
            q = self.quad
            self.nc_idx = q.nc_index
            self.Mw_nc = self.Mw_c[:, self.nc_idx]
            self.Mw_cap = self.Mw_c[:, self.cap_idx]
            self.line_nvar_const = np.einsum(
                "lj,lj->l", self.Mw_nc @ q.schur, self.Mw_nc)
            self.line_nvar_lin = self.Mw_nc @ q.schur_rowsum
            self.sigma_nc_sq = q.sigma_nc_total ** 2
            self.schur_MwT = q.schur @ self.Mw_nc.T
            self.U = np.concatenate([r["agg"] for r in q.regions])
            self.Uw = np.concatenate([r["weights"] for r in q.regions])
            self._region_slices = []
            ofs = 0
            for r in q.regions:
                n = len(r["weights"])
                self._region_slices.append(slice(ofs, ofs + n))
                ofs += n
            total = sum(len(r["weights"]) for r in q.regions)
            self._cache_consts = total * len(self.line_sel) <= _CACHE_LIMIT
            self._line_consts = None
            if self._cache_consts:
                self._line_consts = [self._region_line_const(r)
                                     for r in q.regions]
                cmax = np.max([c.max(axis=0) for c in self._line_consts],
                              axis=0)
                cmin = np.min([c.min(axis=0) for c in self._line_consts],
                              axis=0)
            else:
                cmax = None
                cmin = None
                for r in q.regions:
                    c = self._region_line_const(r)
                    top, bot = c.max(axis=0), c.min(axis=0)
                    cmax = top if cmax is None else np.maximum(cmax, top)
                    cmin = bot if cmin is None else np.minimum(cmin, bot)
            self.line_const_max = cmax
            self.line_const_min = cmin
            self.U_min = float(self.U.min())
            self.U_max = float(self.U.max())

        self.constraints = []
        for fam, count in (("gen_reserve_up", nG), ("gen_reserve_down", nG)):
            for i in range(count):
                self.constraints.append(
                    WccConstraint(fam, i, epsilon.resolve(fam, i)))
        for fam in ("wind_reserve_up", "wind_reserve_down",
                    "wind_availability"):
            for j in self.R:
                self.constraints.append(
                    WccConstraint(fam, int(j), epsilon.resolve(fam, int(j))))
        for fam in ("line_upper", "line_lower"):
            for li in self.line_sel:
                self.constraints.append(
                    WccConstraint(fam, int(li), epsilon.resolve(fam,
                                                                int(li))))
        self.eps_vec = np.array([c.epsilon for c in self.constraints])

        # family slices into the flat constraint list
        self._fam_ofs = {}
        ofs = 0
        for fam, count in (("gen_reserve_up", nG), ("gen_reserve_down", nG),
                           ("wind_reserve_up", len(self.R)),
                           ("wind_reserve_down", len(self.R)),
                           ("wind_availability", len(self.R)),
                           ("line_upper", len(self.line_sel)),
                           ("line_lower", len(self.line_sel))):
            self._fam_ofs[fam] = slice(ofs, ofs + count)
            ofs += count
        self.n_constraints = ofs

    # -- shared per-decision quantities -------------------------------------

    def _region_line_const(self, reg) -> np.ndarray:
        return reg["xi"] @ self.Mw_cap.T + reg["cond_mean"] @ self.Mw_nc.T

    def _iter_region_consts(self):
        q = self.quad
        for i, reg in enumerate(q.regions):
            if self._line_consts is not None:
                yield reg, self._line_consts[i]
            else:
                yield reg, self._region_line_const(reg)

    def _resp_alpha(self, x: Decision) -> np.ndarray:
        return np.concatenate([x.alpha_g, x.alpha_w[self.R]])

    def _base_flow(self, x: Decision) -> np.ndarray:
        return (self.Mg_c @ x.p + self.Mw_c @ x.v + self.flow_shift_c
                - self.d_flow_c)

    def _line_sigma_gauss(self, mbar: np.ndarray) -> np.ndarray:
        var = (self.line_var_const - 2.0 * mbar * self.line_var_lin
               + mbar * mbar * self.sigma_sq_total)
        return np.sqrt(np.clip(var, 0.0, None))

    def _line_sigma_capped(self, mbar: np.ndarray) -> np.ndarray:
        var = (self.line_nvar_const - 2.0 * mbar * self.line_nvar_lin
               + mbar * mbar * self.sigma_nc_sq)
        return np.sqrt(np.clip(var, 0.0, None))

    def _line_sigma_one(self, li: int, mbar_l: float) -> float:
        if self.quad is None:
            var = (self.line_var_const[li]
                   - 2.0 * mbar_l * self.line_var_lin[li]
                   + mbar_l * mbar_l * self.sigma_sq_total)
        else:
            var = (self.line_nvar_const[li]
                   - 2.0 * mbar_l * self.line_nvar_lin[li]
                   + mbar_l * mbar_l * self.sigma_nc_sq)
        return math.sqrt(max(var, 0.0))

    # -- batched evaluation --------------------------------------------------

    def evaluate_all(self, x: Decision, screen: bool = True) -> np.ndarray:
        """Expected overload of every constraint at the decision.

        With ``screen=True`` lines whose rigorous upper bound stays below a
        quarter of their budget are not integrated exactly; the bound is
        reported instead.  That never misclassifies a violated constraint.
        """
        out = np.empty(self.n_constraints)
        R = self.R
        sR = self.stds[R]

        if self.quad is None:
            s = self.sigma_total
            out[self._fam_ofs["gen_reserve_up"]] = expected_positive_part(
                -x.r_up_g, x.alpha_g * s)
            out[self._fam_ofs["gen_reserve_down"]] = expected_positive_part(
                -x.r_dn_g, x.alpha_g * s)
            out[self._fam_ofs["wind_reserve_up"]] = expected_positive_part(
                -x.r_up_w[R], x.alpha_w[R] * s)
            out[self._fam_ofs["wind_reserve_down"]] = expected_positive_part(
                -x.r_dn_w[R], x.alpha_w[R] * s)
        else:
            eps_up = np.concatenate([
                self.eps_vec[self._fam_ofs["gen_reserve_up"]],
                self.eps_vec[self._fam_ofs["wind_reserve_up"]]])
            eps_dn = np.concatenate([
                self.eps_vec[self._fam_ofs["gen_reserve_down"]],
                self.eps_vec[self._fam_ofs["wind_reserve_down"]]])
            up, dn = self._reserve_values_capped(
                np.concatenate([x.r_up_g, x.r_up_w[R]]),
                np.concatenate([x.r_dn_g, x.r_dn_w[R]]),
                self._resp_alpha(x), eps_up, eps_dn, screen)
            nG = self.net.n_gen
            out[self._fam_ofs["gen_reserve_up"]] = up[:nG]
            out[self._fam_ofs["wind_reserve_up"]] = up[nG:]
            out[self._fam_ofs["gen_reserve_down"]] = dn[:nG]
            out[self._fam_ofs["wind_reserve_down"]] = dn[nG:]

        out[self._fam_ofs["wind_availability"]] = expected_positive_part(
            x.r_dn_w[R] - x.v[R], sR)

        up, dn = self._line_values(x, screen=screen)
        out[self._fam_ofs["line_upper"]] = up
        out[self._fam_ofs["line_lower"]] = dn
        return out

    def _reserve_values_capped(self, r_up, r_dn, alpha, eps_up, eps_dn,
                               screen=True):
        sz = alpha * self.quad.sigma_nc_total
        # T is increasing in its mean, so evaluating at the most adverse
        # node bounds the node average from above
        worst_up = np.maximum(-alpha * self.U_min, -alpha * self.U_max)
        worst_dn = np.maximum(alpha * self.U_max, alpha * self.U_min)
        bound_up = expected_positive_part(-r_up + worst_up, sz)
        bound_dn = expected_positive_part(-r_dn + worst_dn, sz)
        if screen:
            live_up = bound_up > 0.25 * eps_up
            live_dn = bound_dn > 0.25 * eps_dn
        else:
            live_up = np.ones(len(r_up), dtype=bool)
            live_dn = np.ones(len(r_dn), dtype=bool)
        val_up = np.array(bound_up)
        val_dn = np.array(bound_dn)
        iu = np.where(live_up)[0]
        idn = np.where(live_dn)[0]
        if len(iu):
            m = -r_up[iu][:, None] - alpha[iu][:, None] * self.U[None, :]
            val_up[iu] = expected_positive_part(m, sz[iu][:, None]) @ self.Uw
        if len(idn):
            m = -r_dn[idn][:, None] + alpha[idn][:, None] * self.U[None, :]
            val_dn[idn] = expected_positive_part(m, sz[idn][:, None]) @ self.Uw
        return val_up, val_dn

    def _line_values(self, x: Decision, screen: bool = True):
        flow0 = self._base_flow(x)
        mbar = self.Mresp @ self._resp_alpha(x)
        y0_up = flow0 - self.limits
        y0_dn = -flow0 - self.limits
        if self.quad is None:
            sig = self._line_sigma_gauss(mbar)
            return (expected_positive_part(y0_up, sig),
                    expected_positive_part(y0_dn, sig))

        sz = self._line_sigma_capped(mbar)
        nL = len(self.limits)
        eps_up = self.eps_vec[self._fam_ofs["line_upper"]]
        eps_dn = self.eps_vec[self._fam_ofs["line_lower"]]
        # rigorous bound: max of the conditional mean over all nodes
        drift = np.where(mbar > 0, -self.U_min * mbar, -self.U_max * mbar)
        bound_up = expected_positive_part(
            y0_up + self.line_const_max + drift, sz)
        # for the lower direction the node constant enters negated
        drift_dn = np.where(mbar > 0, self.U_max * mbar, self.U_min * mbar)
        bound_dn = expected_positive_part(
            y0_dn - self.line_const_min + drift_dn, sz)

        if screen:
            live_up = bound_up > 0.25 * eps_up
            live_dn = bound_dn > 0.25 * eps_dn
        else:
            live_up = np.ones(nL, dtype=bool)
            live_dn = np.ones(nL, dtype=bool)
        val_up = np.array(bound_up)
        val_dn = np.array(bound_dn)
        iu = np.where(live_up)[0]
        idn = np.where(live_dn)[0]
        acc_up = np.zeros(len(iu))
        acc_dn = np.zeros(len(idn))
        for reg, c in self._iter_region_consts():
            w = reg["weights"]
            U = reg["agg"]
            if len(iu):
                m = (y0_up[iu][None, :] + c[:, iu]
                     - U[:, None] * mbar[iu][None, :])
                acc_up += w @ expected_positive_part(m, sz[iu][None, :])
            if len(idn):
                m = (y0_dn[idn][None, :] - c[:, idn]
                     + U[:, None] * mbar[idn][None, :])
                acc_dn += w @ expected_positive_part(m, sz[idn][None, :])
        val_up[iu] = acc_up
        val_dn[idn] = acc_dn
        return val_up, val_dn

    # -- single-constraint interface ----------------------------------------

    def evaluate(self, c: WccConstraint, x: Decision) -> float:
        """Expected overload in MW of one constraint."""
        R = self.R
        if c.family in ("gen_reserve_up", "gen_reserve_down"):
            alpha = x.alpha_g[c.index]
            r = (x.r_up_g if c.family.endswith("up") else x.r_dn_g)[c.index]
            return self._reserve_value(r, alpha, c.family.endswith("up"))
        if c.family in ("wind_reserve_up", "wind_reserve_down"):
            alpha = x.alpha_w[c.index]
            r = (x.r_up_w if c.family.endswith("up") else x.r_dn_w)[c.index]
            return self._reserve_value(r, alpha, c.family.endswith("up"))
        if c.family == "wind_availability":
            return float(expected_positive_part(
                x.r_dn_w[c.index] - x.v[c.index], self.stds[c.index]))
        li = int(np.searchsorted(self.line_sel, c.index))
        assert self.line_sel[li] == c.index
        return self._line_value_single(li, x, c.family == "line_upper")

    def _reserve_value(self, r, alpha, is_up):
        if self.quad is None:
            return float(expected_positive_part(-r, alpha * self.sigma_total))
        sgn = -1.0 if is_up else 1.0
        m = -r + sgn * alpha * self.U
        return float(self.Uw @ expected_positive_part(
            m, alpha * self.quad.sigma_nc_total))

    def _line_value_single(self, li, x, is_upper):
        flow0 = (self.Mg_c[li] @ x.p + self.Mw_c[li] @ x.v
                 + self.flow_shift_c[li] - self.d_flow_c[li])
        mbar = float(self.Mresp[li] @ self._resp_alpha(x))
        y0 = (flow0 if is_upper else -flow0) - self.limits[li]
        sig = self._line_sigma_one(li, mbar)
        if self.quad is None:
            return float(expected_positive_part(y0, sig))
        sz = sig
        total = 0.0
        for reg, c in self._iter_region_consts():
            mm = c[:, li] - reg["agg"] * mbar
            m = y0 + (mm if is_upper else -mm)
            total += float(reg["weights"] @ expected_positive_part(m, sz))
        return total

    # -- gradients -----------------------------------------------------------

    def gradient(self, c: WccConstraint, x: Decision) -> np.ndarray:
        """Exact gradient of the expected overload w.r.t. the decision."""
        return self.gradient_rows(x, [self.constraints.index(c)])[0]

    def index_of(self, c: WccConstraint) -> int:
        return self.constraints.index(c)

    def gradient_rows(self, x: Decision, indices) -> np.ndarray:
        sl = self.layout.slices()
        nG = self.net.n_gen
        rows = np.zeros((len(indices), self.layout.size))
        flow0 = self._base_flow(x)
        mbar = self.Mresp @ self._resp_alpha(x)
        sig_line = (self._line_sigma_gauss(mbar) if self.quad is None
                    else self._line_sigma_capped(mbar))
        for r_i, ci in enumerate(indices):
            c = self.constraints[ci]
            row = rows[r_i]
            if c.family in ("gen_reserve_up", "gen_reserve_down"):
                is_up = c.family.endswith("up")
                alpha = x.alpha_g[c.index]
                r = (x.r_up_g if is_up else x.r_dn_g)[c.index]
                dr, da = self._reserve_slopes(r, alpha, is_up)
                row[sl["r_up_g" if is_up else "r_dn_g"].start + c.index] = dr
                row[sl["alpha_g"].start + c.index] = da
            elif c.family in ("wind_reserve_up", "wind_reserve_down"):
                is_up = c.family.endswith("up")
                alpha = x.alpha_w[c.index]
                r = (x.r_up_w if is_up else x.r_dn_w)[c.index]
                dr, da = self._reserve_slopes(r, alpha, is_up)
                row[sl["r_up_w" if is_up else "r_dn_w"].start + c.index] = dr
                row[sl["alpha_w"].start + c.index] = da
            elif c.family == "wind_availability":
                dmu, _ = positive_part_slopes(
                    x.r_dn_w[c.index] - x.v[c.index], self.stds[c.index])
                row[sl["r_dn_w"].start + c.index] = dmu
                row[sl["v"].start + c.index] = -dmu
            else:
                is_upper = c.family == "line_upper"
                li = int(np.searchsorted(self.line_sel, c.index))
                self._line_gradient(row, sl, li, x, is_upper, flow0[li],
                                    mbar[li], sig_line[li])
        return rows

    def _reserve_slopes(self, r, alpha, is_up):
        if self.quad is None:
            s = self.sigma_total
            dmu, dsig = positive_part_slopes(-r, alpha * s)
            return -dmu, dsig * s
        sgn = -1.0 if is_up else 1.0
        s_nc = self.quad.sigma_nc_total
        m = -r + sgn * alpha * self.U
        dmu, dsig = positive_part_slopes(m, alpha * s_nc)
        w_phi = self.Uw * dmu
        dr = -float(w_phi.sum())
        da = sgn * float(w_phi @ self.U) + s_nc * float(self.Uw @ dsig)
        return dr, da

    def _line_gradient(self, row, sl, li, x, is_upper, flow0_l, mbar_l,
                       sig_l):
        sgn = 1.0 if is_upper else -1.0
        y0 = sgn * flow0_l - self.limits[li]
        if self.quad is None:
            dmu, dsig = positive_part_slopes(y0, sig_l)
            row[sl["p"]] += sgn * dmu * self.Mg_c[li]
            row[sl["v"]] += sgn * dmu * self.Mw_c[li]
            if sig_l > _TINY_STD:
                a_s1 = self.line_var_lin[li] - mbar_l * self.sigma_sq_total
                dsig_dalpha = -self.Mresp[li] * (a_s1 / sig_l)
                self._scatter_alpha(row, sl, dsig * dsig_dalpha)
            return
        d_y0 = 0.0
        s_uphi = 0.0
        p_pdf = 0.0
        for reg, c in self._iter_region_consts():
            mm = c[:, li] - reg["agg"] * mbar_l
            m = y0 + sgn * mm
            dmu, dsig = positive_part_slopes(m, sig_l)
            w_phi = reg["weights"] * dmu
            d_y0 += float(w_phi.sum())
            s_uphi += float(w_phi @ reg["agg"])
            p_pdf += float(reg["weights"] @ dsig)
        row[sl["p"]] += sgn * d_y0 * self.Mg_c[li]
        row[sl["v"]] += sgn * d_y0 * self.Mw_c[li]
        # summed coefficient slopes: the conditional-mean channel keeps its
        # sign in both directions, the conditional-std channel flips with
        # the negated coefficient vector
        sum_dc = s_uphi
        if sig_l > _TINY_STD:
            ones_schur_a = self.line_nvar_lin[li] - mbar_l * self.sigma_nc_sq
            sum_dc += sgn * p_pdf * (ones_schur_a / sig_l)
        self._scatter_alpha(row, sl, -sgn * self.Mresp[li] * sum_dc)

    def _scatter_alpha(self, row, sl, contrib):
        nG = self.net.n_gen
        row[sl["alpha_g"]] += contrib[:nG]
        aw = np.zeros(self.fleet.n_plants)
        aw[self.R] = contrib[nG:]
        row[sl["alpha_w"]] += aw


def build_constraints(net: Network, fleet: WindFleet, ptdf: PtdfMatrix,
                      epsilon=None, **quad_opts) -> ConstraintSet:
    return ConstraintSet(net, fleet, ptdf, epsilon=epsilon, **quad_opts)


def evaluate(cs: ConstraintSet, c: WccConstraint, x: Decision) -> float:
    return cs.evaluate(c, x)


def gradient(cs: ConstraintSet, c: WccConstraint, x: Decision) -> np.ndarray:
    return cs.gradient(c, x)
