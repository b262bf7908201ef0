"""Case and wind-fleet input handling.

Reads grid data in the MATPOWER case format (the subset of columns a DC
model needs) and wind fleet descriptions from a small JSON schema.  Also
owns the stressed-variant modifiers (scaled loads, derated line limits,
relaxed minimum generation) used by the study runs.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Generator", "Line", "Network", "WindPlantConfig", "WindFleetConfig",
    "MatpowerParseError", "WindConfigError",
    "parse_matpower_case", "serialize_matpower_case", "load_case_file",
    "load_wind_config", "load_wind_file", "apply_stress_modifiers",
    "repair_correlation",
]


class MatpowerParseError(ValueError):
    """Raised on malformed case text; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class WindConfigError(ValueError):
    pass


@dataclass
class Generator:
    bus: int
    p_min: float
    p_max: float
    cost_energy: float
    # Reserve capability and pricing are not part of the case format; both
    # default to the energy data (capacity-sized reserve band, reserve
    # priced like energy).
    cost_res_up: float = None
    cost_res_dn: float = None
    r_up_max: float = None
    r_dn_max: float = None

    def __post_init__(self):
        if self.cost_res_up is None:
            self.cost_res_up = self.cost_energy
        if self.cost_res_dn is None:
            self.cost_res_dn = self.cost_energy
        if self.r_up_max is None:
            self.r_up_max = self.p_max
        if self.r_dn_max is None:
            self.r_dn_max = self.p_max


@dataclass
class Line:
    from_bus: int
    to_bus: int
    susceptance: float          # 1/x in per-unit
    limit_mw: float             # thermal limit, MW (inf when unlimited)
    reactance: float = None     # original x, kept for exact serialization

    def __post_init__(self):
        if self.reactance is None:
            self.reactance = 1.0 / self.susceptance


@dataclass(eq=False)
class Network:
    base_mva: float
    bus_ids: list
    loads_mw: np.ndarray
    generators: list
    lines: list
    slack_bus: int = None
    _bus_index: dict = field(default=None, repr=False)

    def __post_init__(self):
        self.loads_mw = np.asarray(self.loads_mw, dtype=float)
        if len(self.loads_mw) != len(self.bus_ids):
            raise ValueError("loads and bus list length mismatch")
        self._bus_index = {b: i for i, b in enumerate(self.bus_ids)}
        if len(self._bus_index) != len(self.bus_ids):
            raise ValueError("duplicate bus ids in case")
        for ln in self.lines:
            if ln.from_bus not in self._bus_index or ln.to_bus not in self._bus_index:
                raise ValueError("line %d-%d references unknown bus"
                                 % (ln.from_bus, ln.to_bus))
        for g in self.generators:
            if g.bus not in self._bus_index:
                raise ValueError("generator at unknown bus %d" % g.bus)

    @property
    def n_bus(self):
        return len(self.bus_ids)

    @property
    def n_gen(self):
        return len(self.generators)

    @property
    def n_line(self):
        return len(self.lines)

    def bus_index(self, bus: int) -> int:
        return self._bus_index[bus]

    def gen_bus_indices(self) -> np.ndarray:
        return np.array([self._bus_index[g.bus] for g in self.generators],
                        dtype=int)

    @property
    def total_load(self) -> float:
        return float(self.loads_mw.sum())

    def reference_bus(self) -> int:
        """Bus used to remove the angle degree of freedom."""
        if self.slack_bus is not None:
            return self.slack_bus
        return max(self.bus_ids)

    def connected(self) -> bool:
        if self.n_bus == 0:
            return False
        adj = {b: [] for b in self.bus_ids}
        for ln in self.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        seen = {self.bus_ids[0]}
        stack = [self.bus_ids[0]]
        while stack:
            b = stack.pop()
            for nb in adj[b]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n_bus

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.base_mva == other.base_mva
                and self.bus_ids == other.bus_ids
                and np.array_equal(self.loads_mw, other.loads_mw)
                and self.generators == other.generators
                and self.lines == other.lines
                and self.slack_bus == other.slack_bus)


@dataclass
class WindPlantConfig:
    bus: int
    mean_mw: float
    std_mw: float
    policy: str                 # "reserve" | "cap" | "mean_only"
    cap_mw: float = None        # deviation cap, only for policy == "cap"


@dataclass
class WindFleetConfig:
    plants: list
    correlation: np.ndarray
    seed: int = 0


# ---------------------------------------------------------------------------
# MATPOWER case parsing

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([^;\[]+);")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    if pos >= 0:
        return line[:pos]
    return line


def _parse_row(text: str, lineno: int):
    text = text.strip().rstrip(";").strip()
    if not text:
        return None
    vals = []
    for tok in text.replace(",", " ").split():
        try:
            vals.append(float(tok))
        except ValueError:
            raise MatpowerParseError("non-numeric token %r" % tok, lineno)
    return vals


def parse_matpower_case(text: str) -> Network:
    """Parse MATPOWER case text into a Network.

    Only the columns the DC model uses are interpreted: baseMVA, bus
    number / type / Pd, branch endpoints / reactance / rateA, generator
    bus / Pmax / Pmin, and the linear gencost coefficient.  rateA of zero
    follows the usual convention of an unlimited line.
    """
    scalars = {}
    tables = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = _strip_comment(lines[i])
        m = _MATRIX_RE.search(raw)
        if m:
            name = m.group(1)
            rows = []
            start = i
            # content may start on the same line after '['
            rest = raw[m.end():]
            i += 1
            closed = False
            if "]" in rest:
                body, _, _ = rest.partition("]")
                row = _parse_row(body, start + 1)
                if row:
                    rows.append((row, start + 1))
                closed = True
            elif rest.strip():
                row = _parse_row(rest, start + 1)
                if row:
                    rows.append((row, start + 1))
            while not closed:
                if i >= len(lines):
                    raise MatpowerParseError(
                        "unterminated matrix mpc.%s" % name, start + 1)
                body = _strip_comment(lines[i])
                if "]" in body:
                    body = body.partition("]")[0]
                    closed = True
                row = _parse_row(body, i + 1)
                if row:
                    rows.append((row, i + 1))
                i += 1
            tables[name] = rows
            continue
        m = _SCALAR_RE.search(raw)
        if m:
            try:
                scalars[m.group(1)] = float(m.group(2).strip().strip("'\""))
            except ValueError:
                pass
        i += 1

    if "baseMVA" not in scalars:
        raise MatpowerParseError("missing mpc.baseMVA")
    for sec in ("bus", "branch", "gen"):
        if sec not in tables or not tables[sec]:
            raise MatpowerParseError("missing mpc.%s section" % sec)

    base_mva = scalars["baseMVA"]
    if base_mva <= 0:
        raise MatpowerParseError("baseMVA must be positive")

    bus_ids = []
    loads = []
    slack = None
    for row, ln in tables["bus"]:
        if len(row) < 3:
            raise MatpowerParseError("bus row needs at least 3 columns", ln)
        bus_ids.append(int(row[0]))
        loads.append(row[2])
        if int(row[1]) == 3:
            slack = int(row[0])

    net_lines = []
    for row, ln in tables["branch"]:
        if len(row) < 6:
            raise MatpowerParseError("branch row needs at least 6 columns", ln)
        x = row[3]
        if x == 0:
            raise MatpowerParseError("branch with zero reactance", ln)
        rate = row[5]
        limit = math.inf if rate <= 0 else rate
        net_lines.append(Line(int(row[0]), int(row[1]),
                              susceptance=1.0 / x, limit_mw=limit,
                              reactance=x))

    costs = []
    if "gencost" in tables:
        for row, ln in tables["gencost"]:
            if len(row) < 5:
                raise MatpowerParseError("gencost row too short", ln)
            model = int(row[0])
            if model != 2:
                raise MatpowerParseError(
                    "only polynomial cost model (2) supported", ln)
            ncost = int(row[3])
            coeffs = row[4:4 + ncost]
            if len(coeffs) != ncost:
                raise MatpowerParseError("gencost coefficient count mismatch",
                                         ln)
            # highest order first; anything beyond linear must vanish
            for c in coeffs[:-2]:
                if c != 0:
                    raise MatpowerParseError(
                        "nonlinear generator cost unsupported", ln)
            lin = coeffs[-2] if ncost >= 2 else 0.0
            costs.append(lin)

    gens = []
    for k, (row, ln) in enumerate(tables["gen"]):
        if len(row) < 10:
            raise MatpowerParseError("gen row needs at least 10 columns", ln)
        cost = costs[k] if k < len(costs) else 0.0
        gens.append(Generator(bus=int(row[0]), p_min=row[9], p_max=row[8],
                              cost_energy=cost))
    if costs and len(costs) != len(gens):
        raise MatpowerParseError("gencost rows do not match gen rows")

    try:
        return Network(base_mva=base_mva, bus_ids=bus_ids, loads_mw=loads,
                       generators=gens, lines=net_lines, slack_bus=slack)
    except ValueError as exc:
        raise MatpowerParseError(str(exc))


def _fmt(v: float) -> str:
    v = float(v)
    if v == math.inf:
        return "0"          # serialized back as an unlimited line
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def serialize_matpower_case(net: Network, name: str = "case") -> str:
    """Emit case text that parses back to an identical Network."""
    gen_buses = {g.bus for g in net.generators}
    out = ["function mpc = %s" % name, "mpc.version = '2';",
           "mpc.baseMVA = %s;" % _fmt(net.base_mva), "mpc.bus = ["]
    for b, d in zip(net.bus_ids, net.loads_mw):
        if b == net.slack_bus:
            t = 3
        elif b in gen_buses:
            t = 2
        else:
            t = 1
        out.append("\t%d\t%d\t%s\t0\t0\t0\t1\t1\t0\t138\t1\t1.06\t0.94;"
                   % (b, t, _fmt(d)))
    out.append("];")
    out.append("mpc.gen = [")
    for g in net.generators:
        out.append("\t%d\t0\t0\t0\t0\t1\t%s\t1\t%s\t%s;"
                   % (g.bus, _fmt(net.base_mva), _fmt(g.p_max), _fmt(g.p_min)))
    out.append("];")
    out.append("mpc.branch = [")
    for ln in net.lines:
        rate = 0.0 if ln.limit_mw == math.inf else ln.limit_mw
        out.append("\t%d\t%d\t0\t%s\t0\t%s\t0\t0\t0\t0\t1;"
                   % (ln.from_bus, ln.to_bus, _fmt(ln.reactance), _fmt(rate)))
    out.append("];")
    out.append("mpc.gencost = [")
    for g in net.generators:
        out.append("\t2\t0\t0\t2\t%s\t0;" % _fmt(g.cost_energy))
    out.append("];")
    out.append("")
    return "\n".join(out)


def load_case_file(path) -> Network:
    with open(path) as fh:
        return parse_matpower_case(fh.read())


# ---------------------------------------------------------------------------
# Wind fleet configuration

def repair_correlation(corr: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Clip negative eigenvalues and restore the unit diagonal.

    Emits a warning when the input was indefinite; exact PSD inputs pass
    through unchanged.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise WindConfigError("correlation must be a square matrix")
    if not np.allclose(corr, corr.T, atol=1e-8):
        raise WindConfigError("correlation matrix is not symmetric")
    corr = 0.5 * (corr + corr.T)
    evals, evecs = np.linalg.eigh(corr)
    if evals.min() >= -tol:
        return corr
    warnings.warn(
        "correlation matrix indefinite (min eigenvalue %.3e); "
        "projecting to nearest PSD with unit diagonal" % evals.min())
    evals = np.clip(evals, 0.0, None)
    fixed = (evecs * evals) @ evecs.T
    d = np.sqrt(np.diag(fixed))
    d[d == 0] = 1.0
    fixed = fixed / np.outer(d, d)
    np.fill_diagonal(fixed, 1.0)
    return 0.5 * (fixed + fixed.T)


_POLICIES = ("reserve", "cap", "mean_only")


def load_wind_config(text: str, network: Network = None) -> WindFleetConfig:
    """Parse the wind fleet JSON document.

    When a network is supplied, plant buses are checked against it.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WindConfigError("invalid JSON: %s" % exc)
    if not isinstance(doc, dict) or "plants" not in doc:
        raise WindConfigError("wind config must be an object with 'plants'")

    plants = []
    for k, p in enumerate(doc["plants"]):
        try:
            bus = int(p["bus"])
            mean = float(p["mean_mw"])
        except (KeyError, TypeError, ValueError):
            raise WindConfigError("plant %d: needs 'bus' and 'mean_mw'" % k)
        if mean < 0:
            raise WindConfigError("plant %d: negative forecast" % k)
        if "std_mw" in p and "std_fraction" in p:
            raise WindConfigError(
                "plant %d: give std_mw or std_fraction, not both" % k)
        if "std_mw" in p:
            std = float(p["std_mw"])
        elif "std_fraction" in p:
            std = float(p["std_fraction"]) * mean
        else:
            raise WindConfigError(
                "plant %d: needs std_mw or std_fraction" % k)
        if std < 0:
            raise WindConfigError("plant %d: negative std" % k)
        pol = p.get("policy", {"type": "reserve"})
        ptype = pol.get("type")
        if ptype not in _POLICIES:
            raise WindConfigError(
                "plant %d: unknown policy type %r" % (k, ptype))
        cap = None
        if ptype == "cap":
            if "cap_mw" not in pol:
                raise WindConfigError(
                    "plant %d: cap policy needs cap_mw" % k)
            cap = float(pol["cap_mw"])
        if network is not None and bus not in network._bus_index:
            raise WindConfigError(
                "plant %d: bus %d not present in the case" % (k, bus))
        plants.append(WindPlantConfig(bus=bus, mean_mw=mean, std_mw=std,
                                      policy=ptype, cap_mw=cap))

    n = len(plants)
    if n == 0:
        raise WindConfigError("wind config has no plants")
    if "correlation" in doc:
        corr = np.asarray(doc["correlation"], dtype=float)
        if corr.shape != (n, n):
            raise WindConfigError(
                "correlation must be %dx%d, got %s" % (n, n, corr.shape))
        if not np.allclose(np.diag(corr), 1.0, atol=1e-6):
            raise WindConfigError("correlation diagonal must be 1")
        corr = repair_correlation(corr)
    else:
        corr = np.eye(n)
    seed = int(doc.get("seed", 0))
    return WindFleetConfig(plants=plants, correlation=corr, seed=seed)


def load_wind_file(path, network: Network = None) -> WindFleetConfig:
    with open(path) as fh:
        return load_wind_config(fh.read(), network=network)


# ---------------------------------------------------------------------------
# Stressed study variant

def apply_stress_modifiers(net: Network, load_factor: float = 1.25,
                           limit_factor: float = 0.75,
                           zero_p_min: bool = True) -> Network:
    """Scaled-load, derated-limit copy of the network.

    Loads are multiplied by load_factor, line limits by limit_factor, and
    minimum generation drops to zero so down-regulation is never blocked
    by unit minimums.
    """
    gens = []
    for g in net.generators:
        gens.append(replace(g, p_min=0.0 if zero_p_min else g.p_min))
    lines = [replace(ln, limit_mw=ln.limit_mw * limit_factor)
             for ln in net.lines]
    return Network(base_mva=net.base_mva, bus_ids=list(net.bus_ids),
                   loads_mw=net.loads_mw * load_factor,
                   generators=gens, lines=lines, slack_bus=net.slack_bus)
