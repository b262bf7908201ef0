"""Wind fleet model and the decision vector of the scheduling problem.

Forecast errors are jointly normal across plants.  Each plant follows one
of three operating policies:

* ``reserve``   - the plant may hold reserve and respond to the aggregate
  deviation through its participation factor,
* ``cap``       - the plant clips its own deviation at a fixed threshold
  above the set-point and does not participate in balancing,
* ``mean_only`` - the plant feeds in set-point plus deviation, nothing else.

Capped plants change the aggregate deviation the responding units must
absorb: the clipped part never reaches the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .case_io import Network, WindFleetConfig

__all__ = ["WindPlant", "WindFleet", "Decision", "DecisionLayout",
           "build_fleet", "scale_to_penetration"]


@dataclass
class WindPlant:
    bus: int
    mean_mw: float
    std_mw: float
    policy: str
    cap_mw: float = None


class WindFleet:
    """Plants plus their joint deviation distribution."""

    def __init__(self, plants, correlation, seed=0):
        self.plants = list(plants)
        self.correlation = np.asarray(correlation, dtype=float)
        self.seed = int(seed)
        n = len(self.plants)
        if self.correlation.shape != (n, n):
            raise ValueError("correlation shape does not match plant count")
        self.means = np.array([p.mean_mw for p in self.plants])
        self.stds = np.array([p.std_mw for p in self.plants])
        self.reserve_idx = np.array(
            [j for j, p in enumerate(self.plants) if p.policy == "reserve"],
            dtype=int)
        self.cap_idx = np.array(
            [j for j, p in enumerate(self.plants) if p.policy == "cap"],
            dtype=int)
        self.caps = np.array([self.plants[j].cap_mw for j in self.cap_idx],
                             dtype=float)
        # shift constant per plant: capped plants with a negative threshold
        # deliver strictly below set-point even at zero deviation
        self.cap_shift = np.zeros(n)
        for j, cap in zip(self.cap_idx, self.caps):
            self.cap_shift[j] = min(0.0, cap)

    @property
    def n_plants(self):
        return len(self.plants)

    @property
    def covariance(self) -> np.ndarray:
        d = self.stds
        return self.correlation * np.outer(d, d)

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(self.stds == 0.0))

    def effective_cap_idx(self) -> np.ndarray:
        """Capped plants whose deviation actually varies."""
        return np.array([j for j in self.cap_idx if self.stds[j] > 0],
                        dtype=int)

    def capped_deviations(self, omega: np.ndarray) -> np.ndarray:
        """Per-plant deviation as seen by the grid, shifted so that the
        zero-forecast-error point maps to zero."""
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        xi = omega.copy()
        for j, cap in zip(self.cap_idx, self.caps):
            xi[:, j] = np.minimum(omega[:, j], cap) - min(0.0, cap)
        return xi

    def aggregate_deviation(self, omega: np.ndarray) -> np.ndarray:
        return self.capped_deviations(omega).sum(axis=1)

    def realized_wind(self, decision, omega: np.ndarray) -> np.ndarray:
        """Actual per-plant feed-in for deviation draws (rows of omega)."""
        omega = np.atleast_2d(omega)
        xi = self.capped_deviations(omega)
        agg = xi.sum(axis=1)
        out = (decision.v[None, :] + self.cap_shift[None, :] + xi
               - np.outer(agg, decision.alpha_w))
        return out

    def realized_generation(self, decision, omega: np.ndarray) -> np.ndarray:
        agg = self.aggregate_deviation(omega)
        return decision.p[None, :] - np.outer(agg, decision.alpha_g)

    def sample_deviations(self, n: int, seed: int = None) -> np.ndarray:
        from .stochastics import sample_mvn
        if seed is None:
            seed = self.seed
        return sample_mvn(self.covariance, n, seed)


def build_fleet(config: WindFleetConfig, net: Network = None) -> WindFleet:
    plants = []
    for pc in config.plants:
        if net is not None and pc.bus not in net._bus_index:
            raise ValueError("wind plant at bus %d not present in case"
                             % pc.bus)
        plants.append(WindPlant(bus=pc.bus, mean_mw=pc.mean_mw,
                                std_mw=pc.std_mw, policy=pc.policy,
                                cap_mw=pc.cap_mw))
    return WindFleet(plants, config.correlation, seed=config.seed)


def scale_to_penetration(fleet: WindFleet, total_load_mw: float,
                         penetration_pct: float) -> WindFleet:
    """Rescale forecasts so they total the given share of system load.

    Standard deviations scale with the forecasts, keeping each plant's
    relative uncertainty unchanged.  Deviation caps are absolute and stay
    as configured.
    """
    base = fleet.means.sum()
    if base <= 0:
        raise ValueError("cannot scale a fleet with zero total forecast")
    factor = (total_load_mw / base) * (penetration_pct / 100.0)
    plants = []
    for p in fleet.plants:
        plants.append(WindPlant(bus=p.bus, mean_mw=p.mean_mw * factor,
                                std_mw=p.std_mw * factor, policy=p.policy,
                                cap_mw=p.cap_mw))
    return WindFleet(plants, fleet.correlation, seed=fleet.seed)


# ---------------------------------------------------------------------------
# Decision vector

@dataclass
class DecisionLayout:
    """Offsets of the flat decision vector used by the master problem."""
    n_gen: int
    n_wind: int

    @property
    def size(self):
        return 4 * self.n_gen + 4 * self.n_wind

    def slices(self):
        ng, nw = self.n_gen, self.n_wind
        ofs = 0
        out = {}
        for name, ln in (("p", ng), ("v", nw), ("alpha_g", ng),
                         ("alpha_w", nw), ("r_up_g", ng), ("r_dn_g", ng),
                         ("r_up_w", nw), ("r_dn_w", nw)):
            out[name] = slice(ofs, ofs + ln)
            ofs += ln
        return out


@dataclass
class Decision:
    p: np.ndarray
    v: np.ndarray
    alpha_g: np.ndarray
    alpha_w: np.ndarray
    r_up_g: np.ndarray
    r_dn_g: np.ndarray
    r_up_w: np.ndarray
    r_dn_w: np.ndarray

    def __post_init__(self):
        for f in ("p", "v", "alpha_g", "alpha_w", "r_up_g", "r_dn_g",
                  "r_up_w", "r_dn_w"):
            setattr(self, f, np.asarray(getattr(self, f), dtype=float))

    @property
    def layout(self):
        return DecisionLayout(len(self.p), len(self.v))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.alpha_g, self.alpha_w,
                               self.r_up_g, self.r_dn_g, self.r_up_w,
                               self.r_dn_w])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_gen: int, n_wind: int):
        vec = np.asarray(vec, dtype=float)
        layout = DecisionLayout(n_gen, n_wind)
        if vec.shape != (layout.size,):
            raise ValueError("decision vector has wrong length")
        s = layout.slices()
        return cls(**{name: vec[sl].copy() for name, sl in s.items()})

    @classmethod
    def zeros(cls, n_gen: int, n_wind: int):
        return cls.from_vector(np.zeros(4 * n_gen + 4 * n_wind),
                               n_gen, n_wind)

    def copy(self):
        return Decision.from_vector(self.to_vector(), len(self.p),
                                    len(self.v))

    def total_alpha(self) -> float:
        return float(self.alpha_g.sum() + self.alpha_w.sum())
