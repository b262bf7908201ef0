"""Probability kernels for expected-overload computations.

Everything here reduces to one scalar kernel: for Y ~ N(mu, sigma^2),

    E[max(Y, 0)] = mu * Phi(mu/sigma) + sigma * phi(mu/sigma)

which is jointly convex in (mu, sigma) and nondecreasing in sigma.  Plain
affine violation functions of a Gaussian vector land directly on the
kernel.  Violation functions that are only piecewise affine (because some
plants clip their deviation at a cap) are handled by conditioning on the
capped coordinates and integrating the kernel over each clipping region
with a probit-transformed quadrature rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

__all__ = [
    "norm_pdf", "norm_cdf", "expected_positive_part", "positive_part_slopes",
    "PiecewiseAffineOverload", "CapQuadrature", "capped_wcc_value",
    "capped_moments", "sample_mvn", "mc_expected_overload",
    "mc_expected_overload_affine",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)
_TINY_STD = 1e-12


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT2PI


def norm_cdf(z):
    return ndtr(np.asarray(z, dtype=float))


def expected_positive_part(mean, std):
    """E[max(Y,0)] for Y ~ N(mean, std^2), elementwise.

    A zero std degenerates to max(mean, 0).
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be nonnegative")
    if np.all(std > _TINY_STD):
        z = mean / std
        out = mean * ndtr(z) + std * (np.exp(-0.5 * z * z) / _SQRT2PI)
        if out.ndim == 0:
            return float(out)
        return out
    mean, std = np.broadcast_arrays(mean, std)
    out = np.maximum(mean, 0.0)
    live = std > _TINY_STD
    if np.any(live):
        m = mean[live]
        s = std[live]
        z = m / s
        out = np.array(out, dtype=float)
        out[live] = m * ndtr(z) + s * norm_pdf(z)
    if out.ndim == 0:
        return float(out)
    return out


def positive_part_slopes(mean, std):
    """Partial derivatives (d/dmean, d/dstd) of expected_positive_part.

    At std == 0 the mean-slope falls back to the subgradient of
    max(mean, 0), which is what cut generation needs.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.all(std > _TINY_STD):
        z = mean / std
        dmu = ndtr(z)
        dsig = np.exp(-0.5 * z * z) / _SQRT2PI
        dmu, dsig = np.broadcast_arrays(dmu, dsig)
        if dmu.ndim == 0:
            return float(dmu), float(dsig)
        return dmu, dsig
    mean, std = np.broadcast_arrays(mean, std)
    dmu = (mean > 0).astype(float)
    dsig = np.zeros_like(dmu)
    live = std > _TINY_STD
    if np.any(live):
        z = mean[live] / std[live]
        dmu = np.array(dmu, dtype=float)
        dmu[live] = ndtr(z)
        dsig[live] = norm_pdf(z)
    if dmu.ndim == 0:
        return float(dmu), float(dsig)
    return dmu, dsig


def capped_moments(std: float, cap: float):
    """Mean, standard deviation and expected spill of min(w, cap) for
    w ~ N(0, std^2).

    Spill is E[(w - cap)+], the average clipped-away energy.
    """
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std <= _TINY_STD:
        return min(0.0, cap), 0.0, max(-cap, 0.0)
    z = cap / std
    mean = cap * ndtr(-z) - std * float(norm_pdf(z))
    second = std * std * (ndtr(z) - z * float(norm_pdf(z))) \
        + cap * cap * ndtr(-z)
    var = max(second - mean * mean, 0.0)
    spill = expected_positive_part(-cap, std)
    return float(mean), math.sqrt(var), float(spill)


# ---------------------------------------------------------------------------
# sampling

def _psd_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
        evals = np.clip(evals, 0.0, None)
        return evecs * np.sqrt(evals)


def sample_mvn(cov: np.ndarray, n: int, seed: int,
               mean: np.ndarray = None) -> np.ndarray:
    """Draws from N(mean, cov) with a counter-based generator.

    The same (cov, n, seed) always returns the same array regardless of
    how the caller is parallelized.
    """
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    L = _psd_factor(cov)
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = rng.standard_normal((n, d))
    out = z @ L.T
    if mean is not None:
        out = out + np.asarray(mean, dtype=float)[None, :]
    return out


# ---------------------------------------------------------------------------
# piecewise-affine violation functions

class PiecewiseAffineOverload:
    """Violation magnitude y(w) affine on each clipping orthant.

    Region ``b`` (a bitmask over the capped coordinates) collects the
    outcomes where coordinate k exceeds its cap exactly when bit k of b is
    set.  Adjacent regions must agree on their shared boundary; the
    constructor rejects discontinuous data.
    """

    def __init__(self, cap_index, caps, base, coef, cov, tol=1e-8):
        self.cap_index = tuple(int(k) for k in cap_index)
        self.caps = np.asarray(caps, dtype=float)
        self.base = np.asarray(base, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        K = len(self.cap_index)
        if self.caps.shape != (K,):
            raise ValueError("caps must have one threshold per capped index")
        if self.base.shape != (2 ** K,) or self.coef.shape[0] != 2 ** K:
            raise ValueError("need one affine form per clipping region")
        if self.coef.shape[1] != self.cov.shape[0]:
            raise ValueError("coefficient length does not match covariance")
        self._check_continuity(tol)

    @property
    def dim(self):
        return self.coef.shape[1]

    def _check_continuity(self, tol):
        K = len(self.cap_index)
        for b in range(2 ** K):
            for k in range(K):
                if b & (1 << k):
                    continue
                b2 = b | (1 << k)
                ck = self.cap_index[k]
                diff = np.abs(self.coef[b] - self.coef[b2])
                diff[ck] = 0.0
                if diff.max() > tol:
                    raise ValueError(
                        "piecewise form discontinuous across cap %d: "
                        "off-coordinate slopes differ" % ck)
                lhs = self.base[b] + self.coef[b, ck] * self.caps[k]
                rhs = self.base[b2] + self.coef[b2, ck] * self.caps[k]
                if abs(lhs - rhs) > tol * max(1.0, abs(lhs), abs(rhs)):
                    raise ValueError(
                        "piecewise form discontinuous across cap %d: "
                        "boundary values differ by %.3e" % (ck, lhs - rhs))

    @classmethod
    def from_capped_affine(cls, y0, coeffs, cap_index, caps, cov):
        """Build the region forms of y = y0 + sum_j coeffs_j * xi_j where
        xi clips the capped coordinates (shifted to vanish at w = 0)."""
        coeffs = np.asarray(coeffs, dtype=float)
        cap_index = tuple(int(k) for k in cap_index)
        caps = np.asarray(caps, dtype=float)
        K = len(cap_index)
        d = len(coeffs)
        base = np.zeros(2 ** K)
        coef = np.zeros((2 ** K, d))
        for b in range(2 ** K):
            a0 = float(y0)
            a = coeffs.copy()
            for k, (ck, cap) in enumerate(zip(cap_index, caps)):
                m0 = min(0.0, cap)
                if b & (1 << k):
                    a0 += coeffs[ck] * (cap - m0)
                    a[ck] = 0.0
                else:
                    a0 -= coeffs[ck] * m0
            base[b] = a0
            coef[b] = a
        return cls(cap_index, caps, base, coef, cov)

    def region_of(self, omega: np.ndarray) -> np.ndarray:
        omega = np.atleast_2d(omega)
        b = np.zeros(omega.shape[0], dtype=int)
        for k, (ck, cap) in enumerate(zip(self.cap_index, self.caps)):
            b |= (omega[:, ck] > cap).astype(int) << k
        return b

    def __call__(self, omega: np.ndarray) -> np.ndarray:
        """Evaluate y on raw deviation draws (rows of omega)."""
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        b = self.region_of(omega)
        y = np.empty(omega.shape[0])
        for reg in np.unique(b):
            m = b == reg
            y[m] = self.base[reg] + omega[m] @ self.coef[reg]
        return y


# ---------------------------------------------------------------------------
# quadrature over clipping regions

MAX_CAPPED = 10


class CapQuadrature:
    """Integrator for E[max(y(w), 0)] when y is affine per clipping region.

    Conditioned on the capped coordinates, y is Gaussian, so the
    expectation becomes an integral of the positive-part kernel over each
    rectangle of cap outcomes.  The rectangles are mapped to the unit cube
    with the sequential probit transform; a tensor Gauss-Legendre rule
    covers one or two capped plants, scrambled Sobol points take over
    beyond that.
    """

    def __init__(self, cov, cap_index, caps, nodes: int = 32,
                 qmc_log2: int = 16, qmc_seed: int = 7):
        self.cov = np.asarray(cov, dtype=float)
        self.cap_index = np.asarray(cap_index, dtype=int)
        self.caps = np.asarray(caps, dtype=float)
        K = len(self.cap_index)
        if K == 0:
            raise ValueError("no capped coordinates; use the plain kernel")
        if K > MAX_CAPPED:
            raise ValueError(
                "%d capped plants exceed the supported maximum of %d; "
                "the clipping-region decomposition grows as 2^K"
                % (K, MAX_CAPPED))
        d = self.cov.shape[0]
        self.dim = d
        self.K = K
        mask = np.zeros(d, dtype=bool)
        mask[self.cap_index] = True
        self.nc_index = np.where(~mask)[0]

        Scc = self.cov[np.ix_(self.cap_index, self.cap_index)]
        Snc_c = self.cov[np.ix_(self.nc_index, self.cap_index)]
        Snn = self.cov[np.ix_(self.nc_index, self.nc_index)]
        try:
            Lc = np.linalg.cholesky(Scc)
        except np.linalg.LinAlgError:
            raise ValueError(
                "covariance of the capped coordinates is singular; capped "
                "plants need strictly positive, nondegenerate uncertainty")
        # conditional mean map and Schur complement of the capped block
        self.G = np.linalg.solve(Scc.T, Snc_c.T).T     # (n_nc, K)
        schur = Snn - self.G @ Snc_c.T
        schur = 0.5 * (schur + schur.T)
        evals, evecs = np.linalg.eigh(schur)
        evals = np.clip(evals, 0.0, None)
        self.schur = (evecs * evals) @ evecs.T
        self.schur_rowsum = self.schur.sum(axis=1)
        self.sigma_nc_total = math.sqrt(max(self.schur.sum(), 0.0))

        self.regions = []
        if K <= 2:
            x_gl, w_gl = np.polynomial.legendre.leggauss(nodes)
            for b in range(2 ** K):
                self.regions.append(self._build_region_gl(b, Lc, x_gl, w_gl))
        else:
            sob = qmc.Sobol(d=K, scramble=True, seed=qmc_seed)
            zpts = sob.random(2 ** qmc_log2)
            zpts = np.clip(zpts, 1e-12, 1.0 - 1e-12)
            wbase = np.full(zpts.shape[0], 1.0 / zpts.shape[0])
            for b in range(2 ** K):
                self.regions.append(self._build_region_qmc(b, Lc, zpts,
                                                           wbase))
        total = sum(r["weights"].sum() for r in self.regions)
        # total probability over all regions must be one
        if abs(total - 1.0) > 1e-6:
            raise AssertionError(
                "region probabilities sum to %.8f, expected 1" % total)

    def _region_bounds(self, b):
        lo = np.empty(self.K)
        hi = np.empty(self.K)
        for k in range(self.K):
            if b & (1 << k):
                lo[k], hi[k] = self.caps[k], np.inf
            else:
                lo[k], hi[k] = -np.inf, self.caps[k]
        return lo, hi

    def _finish_region(self, b, w_nodes, weights):
        xi = np.empty_like(w_nodes)
        for k in range(self.K):
            m0 = min(0.0, self.caps[k])
            if b & (1 << k):
                xi[:, k] = self.caps[k] - m0
            else:
                xi[:, k] = w_nodes[:, k] - m0
        cond_mean = w_nodes @ self.G.T          # (Q, n_nc)
        return {
            "mask": b,
            "weights": weights,
            "w_nodes": w_nodes,
            "xi": xi,
            "cond_mean": cond_mean,
            "agg": xi.sum(axis=1) + cond_mean.sum(axis=1),
        }

    # Gaussian tails truncated here carry ~1e-17 of the mass.
    _U_CLIP = 8.5

    def _build_region_gl(self, b, Lc, x_gl, w_gl):
        """Tensor Gauss-Legendre in standardized coordinates.

        The rectangle is mapped through the Cholesky factor one coordinate
        at a time; each coordinate integrates the explicit normal density
        over a finite interval, so the rule converges geometrically.
        """
        K = self.K
        lo, hi = self._region_bounds(b)
        u = np.zeros((1, 0))
        weights = np.ones(1)
        for k in range(K):
            shift = u @ Lc[k, :k] if k else np.zeros(1)
            lk = np.maximum((lo[k] - shift) / Lc[k, k], -self._U_CLIP)
            hk = np.minimum((hi[k] - shift) / Lc[k, k], self._U_CLIP)
            half = np.maximum(0.5 * (hk - lk), 0.0)
            mid = 0.5 * (hk + lk)
            uk = mid[:, None] + half[:, None] * x_gl[None, :]
            wk = (weights[:, None] * half[:, None] * w_gl[None, :]
                  * norm_pdf(uk))
            n_prev = u.shape[0]
            u = np.repeat(u, len(x_gl), axis=0)
            u = np.column_stack([u, uk.reshape(-1)])
            weights = wk.reshape(-1)
            assert u.shape[0] == n_prev * len(x_gl)
        return self._finish_region(b, u @ Lc.T, weights)

    def _build_region_qmc(self, b, Lc, zpts, wbase):
        """Sequential probit transform of low-discrepancy points."""
        K = self.K
        Q = zpts.shape[0]
        lo, hi = self._region_bounds(b)
        u = np.zeros((Q, K))
        prob = np.ones(Q)
        for k in range(K):
            shift = u[:, :k] @ Lc[k, :k] if k else 0.0
            lk = (lo[k] - shift) / Lc[k, k]
            hk = (hi[k] - shift) / Lc[k, k]
            Plo = ndtr(lk)
            pk = np.maximum(ndtr(hk) - Plo, 0.0)
            t = np.clip(Plo + zpts[:, k] * pk, 1e-300, 1.0 - 1e-16)
            u[:, k] = ndtri(t)
            prob *= pk
        return self._finish_region(b, u @ Lc.T, wbase * prob)

    # -- scalar interface ---------------------------------------------------

    def _sigma_z(self, a_nc: np.ndarray) -> float:
        return math.sqrt(max(float(a_nc @ self.schur @ a_nc), 0.0))

    def value(self, y0: float, coeffs: np.ndarray) -> float:
        """E[max(y,0)] for y = y0 + coeffs . xi(w)."""
        coeffs = np.asarray(coeffs, dtype=float)
        a_c = coeffs[self.cap_index]
        a_nc = coeffs[self.nc_index]
        sz = self._sigma_z(a_nc)
        total = 0.0
        for reg in self.regions:
            m = y0 + reg["xi"] @ a_c + reg["cond_mean"] @ a_nc
            total += float(reg["weights"] @ expected_positive_part(m, sz))
        return total

    def value_and_slopes(self, y0: float, coeffs: np.ndarray):
        """Value plus exact partials w.r.t. y0 and each coefficient."""
        coeffs = np.asarray(coeffs, dtype=float)
        a_c = coeffs[self.cap_index]
        a_nc = coeffs[self.nc_index]
        sz = self._sigma_z(a_nc)
        val = 0.0
        d_y0 = 0.0
        d_coeffs = np.zeros(self.dim)
        schur_a = self.schur @ a_nc
        for reg in self.regions:
            m = y0 + reg["xi"] @ a_c + reg["cond_mean"] @ a_nc
            dmu, dsig = positive_part_slopes(m, sz)
            wphi = reg["weights"] * dmu
            val += float(reg["weights"] @ expected_positive_part(m, sz))
            d_y0 += float(wphi.sum())
            d_coeffs[self.cap_index] += wphi @ reg["xi"]
            d_coeffs[self.nc_index] += wphi @ reg["cond_mean"]
            if sz > _TINY_STD:
                wpdf = float(reg["weights"] @ dsig)
                d_coeffs[self.nc_index] += wpdf * schur_a / sz
        return val, d_y0, d_coeffs

    def value_piecewise(self, o: PiecewiseAffineOverload) -> float:
        """General per-region affine forms (slopes on raw w)."""
        if tuple(o.cap_index) != tuple(self.cap_index):
            raise ValueError("overload cap set does not match quadrature")
        total = 0.0
        for reg in self.regions:
            b = reg["mask"]
            c = o.coef[b]
            c_c = c[self.cap_index]
            c_nc = c[self.nc_index]
            sz = self._sigma_z(c_nc)
            m = o.base[b] + reg["w_nodes"] @ c_c + reg["cond_mean"] @ c_nc
            total += float(reg["weights"] @ expected_positive_part(m, sz))
        return total


def capped_wcc_value(overload: PiecewiseAffineOverload, nodes: int = 32,
                     qmc_log2: int = 16, qmc_seed: int = 7) -> float:
    """Expected overload of a piecewise-affine violation function."""
    quad = CapQuadrature(overload.cov, overload.cap_index, overload.caps,
                         nodes=nodes, qmc_log2=qmc_log2, qmc_seed=qmc_seed)
    return quad.value_piecewise(overload)


# ---------------------------------------------------------------------------
# Monte Carlo reference

def _mc_accumulate(eval_chunk, cov, n_samples, seed, chunk):
    """Chunked fixed-order accumulation; deterministic for fixed seed."""
    L = _psd_factor(cov)
    d = cov.shape[0]
    rng = np.random.Generator(np.random.Philox(key=seed))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        z = rng.standard_normal((m, d))
        y = eval_chunk(z @ L.T)
        pos = np.maximum(y, 0.0)
        total += float(pos.sum())
        total_sq += float((pos * pos).sum())
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    se = math.sqrt(var / n_samples)
    return mean, se


def mc_expected_overload(overload: PiecewiseAffineOverload, n_samples: int,
                         seed: int, chunk: int = 1 << 19):
    """Plain Monte Carlo estimate (mean, stderr) of E[max(y,0)]."""
    return _mc_accumulate(overload, overload.cov, int(n_samples), seed,
                          chunk)


def mc_expected_overload_affine(y0, coeffs, cov, cap_index=(), caps=(),
                                n_samples: int = 10 ** 6, seed: int = 0,
                                chunk: int = 1 << 19):
    """Monte Carlo for the clipped-affine form without building regions."""
    coeffs = np.asarray(coeffs, dtype=float)
    cap_index = np.asarray(cap_index, dtype=int)
    caps = np.asarray(caps, dtype=float)

    def eval_chunk(w):
        if len(cap_index):
            xi = w.copy()
            for k, cap in zip(cap_index, caps):
                xi[:, k] = np.minimum(w[:, k], cap) - min(0.0, cap)
        else:
            xi = w
        return y0 + xi @ coeffs

    return _mc_accumulate(eval_chunk, np.asarray(cov, dtype=float),
                          int(n_samples), seed, chunk)
