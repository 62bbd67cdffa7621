"""Static grid case data and deterministic DC network algebra.

Holds the case model (buses, lines, generators, wind, loads, contingency
lists) plus the injection-to-flow sensitivity machinery: admittance matrix
assembly, shift-factor (PTDF) matrices for the base and post-line-outage
topologies, and flow evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

BALANCE_TOL_MW = 1e-6


class CaseError(ValueError):
    """Raised when a case file is malformed or violates case invariants."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid case:\n" + "\n".join(f"  - {v}" for v in self.violations))


class IslandingError(ValueError):
    """Raised when removing a line disconnects the network."""


class BalanceError(ValueError):
    """Raised when an injection vector does not sum to zero."""


@dataclass(frozen=True)
class Line:
    name: str
    from_bus: str
    to_bus: str
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class CostBlock:
    """One segment of the piecewise-linear production cost curve."""

    price: float  # $/MW
    size: float  # MW width of the segment


@dataclass(frozen=True)
class StartupBlock:
    """Stepwise startup cost for an off-duration in [min_off, max_off] hours."""

    cost: float
    min_off: int
    max_off: int


@dataclass(frozen=True)
class Generator:
    name: str
    bus: str
    pmin: float
    pmax: float
    cost_blocks: tuple[CostBlock, ...]
    no_load_cost: float
    reserve_price: float  # $/MW on regulation reserve (up and down)
    tertiary_price: float  # $/MW on tertiary reserve
    startup_blocks: tuple[StartupBlock, ...]
    ramp_up: float
    ramp_down: float
    min_up: int
    min_down: int
    initial_on: bool
    initial_hours_on: int
    initial_hours_off: int
    initial_output: float
    reserve_limit: float | None = None  # overrides the case-wide bound when set


@dataclass(frozen=True)
class WindFarm:
    bus: str
    forecast: tuple[float, ...]  # mean output per hour, MW
    std: tuple[float, ...]  # deviation std per hour, MW


@dataclass(frozen=True)
class GridCase:
    """Immutable network, generator, wind, load and contingency data.

    All powers are MW on the declared MVA base; the horizon is hourly.
    """

    name: str
    mva_base: float
    buses: tuple[str, ...]
    reference_bus: str
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    wind_farms: tuple[WindFarm, ...]
    loads: Mapping[str, tuple[float, ...]]
    reserve_limit: float
    generator_contingencies: tuple[str, ...]
    line_contingencies: tuple[str, ...]
    horizon: int

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[str, int]:
        return {ln.name: i for i, ln in enumerate(self.lines)}

    @cached_property
    def gen_index(self) -> dict[str, int]:
        return {g.name: i for i, g in enumerate(self.generators)}

    @cached_property
    def gen_bus_cols(self) -> np.ndarray:
        """Bus column index of each generator, in generator order."""
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=int)

    @cached_property
    def wind_buses(self) -> tuple[str, ...]:
        """Buses with wind, deduplicated, in bus order."""
        with_wind = {w.bus for w in self.wind_farms}
        return tuple(b for b in self.buses if b in with_wind)

    @cached_property
    def wind_bus_cols(self) -> np.ndarray:
        return np.array([self.bus_index[b] for b in self.wind_buses], dtype=int)

    @cached_property
    def load_matrix(self) -> np.ndarray:
        """Per-bus load, shape (buses, horizon)."""
        d = np.zeros((len(self.buses), self.horizon))
        for bus, series in self.loads.items():
            d[self.bus_index[bus], :] = series
        return d

    @cached_property
    def wind_forecast_matrix(self) -> np.ndarray:
        """Per-bus forecast wind injection, shape (buses, horizon)."""
        mu = np.zeros((len(self.buses), self.horizon))
        for farm in self.wind_farms:
            mu[self.bus_index[farm.bus], :] += farm.forecast
        return mu

    @cached_property
    def wind_std_matrix(self) -> np.ndarray:
        """Per-wind-bus deviation std, shape (wind buses, horizon).

        Farms sharing a bus are combined as independent components.
        """
        var = np.zeros((len(self.wind_buses), self.horizon))
        pos = {b: i for i, b in enumerate(self.wind_buses)}
        for farm in self.wind_farms:
            var[pos[farm.bus], :] += np.asarray(farm.std) ** 2
        return np.sqrt(var)

    def fixed_injection(self, t: int) -> np.ndarray:
        """Forecast-wind-minus-load bus injection for hour t (1-based)."""
        return self.wind_forecast_matrix[:, t - 1] - self.load_matrix[:, t - 1]

    def effective_reserve_limit(self, gen: Generator) -> float:
        return gen.reserve_limit if gen.reserve_limit is not None else self.reserve_limit


@dataclass(frozen=True)
class SensitivityMatrix:
    """Injection-to-line-flow shift factors for one topology.

    ``matrix`` has one row per line (case line order) and one column per
    bus; the reference-bus column is identically zero.  ``outage`` names
    the removed line, or None for the base topology.
    """

    matrix: np.ndarray
    line_names: tuple[str, ...]
    bus_names: tuple[str, ...]
    reference_bus: str
    outage: str | None = None

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def row(self, line_name: str) -> np.ndarray:
        return self.matrix[self.line_names.index(line_name)]


def _connected_components(buses: Sequence[str], lines: Sequence[Line]) -> list[set[str]]:
    adj: dict[str, set[str]] = {b: set() for b in buses}
    for ln in lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    seen: set[str] = set()
    comps = []
    for b in buses:
        if b in seen:
            continue
        stack, comp = [b], set()
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(adj[u] - comp)
        seen |= comp
        comps.append(comp)
    return comps


def validate_case(case: GridCase) -> list[str]:
    """Check every case invariant; return diagnostics (empty means valid)."""
    out: list[str] = []
    buses = set(case.buses)
    if len(buses) != len(case.buses):
        out.append("buses: duplicate bus ids")
    if case.reference_bus not in buses:
        out.append(f"reference_bus: {case.reference_bus!r} is not a bus")
    if case.horizon < 1:
        out.append(f"horizon: must be >= 1, got {case.horizon}")
    if case.reserve_limit < 0:
        out.append(f"reserve_limit: must be >= 0, got {case.reserve_limit}")

    seen_lines = set()
    for ln in case.lines:
        if ln.name in seen_lines:
            out.append(f"line {ln.name}: duplicate line name")
        seen_lines.add(ln.name)
        if ln.from_bus not in buses or ln.to_bus not in buses:
            out.append(f"line {ln.name}: endpoint not a bus")
        if ln.susceptance <= 0:
            out.append(f"line {ln.name}: susceptance must be > 0, got {ln.susceptance}")
        if ln.capacity <= 0:
            out.append(f"line {ln.name}: capacity must be > 0, got {ln.capacity}")

    seen_gens = set()
    for g in case.generators:
        if g.name in seen_gens:
            out.append(f"generator {g.name}: duplicate generator name")
        seen_gens.add(g.name)
        if g.bus not in buses:
            out.append(f"generator {g.name}: bus {g.bus!r} not a bus")
        if not 0 <= g.pmin <= g.pmax:
            out.append(f"generator {g.name}: requires 0 <= pmin <= pmax")
        span = sum(b.size for b in g.cost_blocks)
        if span < g.pmax - g.pmin - 1e-9:
            out.append(
                f"generator {g.name}: cost blocks span {span} MW < operating range "
                f"{g.pmax - g.pmin} MW"
            )
        blocks = g.startup_blocks
        for j, sb in enumerate(blocks):
            if sb.min_off > sb.max_off:
                out.append(f"generator {g.name}: startup block {j} has min_off > max_off")
            if j > 0:
                if sb.min_off != blocks[j - 1].max_off + 1:
                    out.append(
                        f"generator {g.name}: startup blocks {j - 1},{j} are not contiguous"
                    )
                if sb.cost < blocks[j - 1].cost:
                    out.append(f"generator {g.name}: startup block costs must be non-decreasing")
        if g.initial_on and not (g.initial_hours_on > 0 and g.initial_hours_off == 0):
            out.append(f"generator {g.name}: initial_on requires initial_hours_on > 0 only")
        if not g.initial_on and not (g.initial_hours_off > 0 and g.initial_hours_on == 0):
            out.append(f"generator {g.name}: initial off requires initial_hours_off > 0 only")
        if not g.initial_on and g.initial_output != 0:
            out.append(f"generator {g.name}: offline unit must have zero initial output")

    for bus, series in case.loads.items():
        if bus not in buses:
            out.append(f"loads: {bus!r} is not a bus")
        if len(series) != case.horizon:
            out.append(f"loads at {bus}: expected {case.horizon} hours, got {len(series)}")
    for farm in case.wind_farms:
        if farm.bus not in buses:
            out.append(f"wind farm at {farm.bus!r}: not a bus")
        if len(farm.forecast) != case.horizon or len(farm.std) != case.horizon:
            out.append(f"wind farm at {farm.bus}: series length must equal horizon")
        if any(s < 0 for s in farm.std):
            out.append(f"wind farm at {farm.bus}: std must be >= 0")

    gen_names = {g.name for g in case.generators}
    for gc in case.generator_contingencies:
        if gc not in gen_names:
            out.append(f"generator_contingencies: unknown generator {gc!r}")
    line_names = {ln.name for ln in case.lines}
    for lc in case.line_contingencies:
        if lc not in line_names:
            out.append(f"line_contingencies: unknown line {lc!r}")

    comps = _connected_components(case.buses, case.lines)
    if len(comps) > 1:
        out.append(
            "topology: base network is disconnected into components "
            + ", ".join(sorted("{" + ",".join(sorted(c)) + "}" for c in comps))
        )
    else:
        # Islanding contingencies are rejected outright; no shedding is modeled.
        for lc in case.line_contingencies:
            if lc not in line_names:
                continue
            rest = [ln for ln in case.lines if ln.name != lc]
            if len(_connected_components(case.buses, rest)) > 1:
                out.append(f"line_contingencies: outage of {lc} islands the network")
    return out


def _reduced_admittance(case: GridCase, lines: Sequence[Line]) -> tuple[np.ndarray, np.ndarray]:
    """Bus admittance matrix with the reference row/column removed.

    Returns (reduced matrix, kept-column bus indices).
    """
    n = len(case.buses)
    B = np.zeros((n, n))
    for ln in lines:
        a, b = case.bus_index[ln.from_bus], case.bus_index[ln.to_bus]
        B[a, a] += ln.susceptance
        B[b, b] += ln.susceptance
        B[a, b] -= ln.susceptance
        B[b, a] -= ln.susceptance
    keep = np.array([i for i in range(n) if i != case.bus_index[case.reference_bus]], dtype=int)
    return B[np.ix_(keep, keep)], keep


def _ptdf_for_lines(case: GridCase, lines: Sequence[Line]) -> np.ndarray:
    """Shift factors for an arbitrary line subset via one factorization.

    Solves the reduced system for all unit injections at once, then maps
    angles to flows through the susceptance-weighted incidence rows.
    """
    comps = _connected_components(case.buses, lines)
    if len(comps) > 1:
        raise IslandingError(
            "network is disconnected: "
            + ", ".join(sorted("{" + ",".join(sorted(c)) + "}" for c in comps))
        )
    B_red, keep = _reduced_admittance(case, lines)
    lu, piv = scipy.linalg.lu_factor(B_red)
    theta = scipy.linalg.lu_solve((lu, piv), np.eye(len(keep)))  # angles per unit injection
    n = len(case.buses)
    M = np.zeros((len(lines), n))
    col_of = {int(b): j for j, b in enumerate(keep)}
    for li, ln in enumerate(lines):
        a, b = case.bus_index[ln.from_bus], case.bus_index[ln.to_bus]
        row = np.zeros(len(keep))
        if a in col_of:
            row += ln.susceptance * theta[col_of[a]]
        if b in col_of:
            row -= ln.susceptance * theta[col_of[b]]
        M[li, keep] = row
    return M


def build_ptdf(case: GridCase) -> SensitivityMatrix:
    """Base-topology shift factor matrix; reference column is zero."""
    M = _ptdf_for_lines(case, case.lines)
    return SensitivityMatrix(
        matrix=M,
        line_names=tuple(ln.name for ln in case.lines),
        bus_names=case.buses,
        reference_bus=case.reference_bus,
    )


def outage_ptdf(case: GridCase, lc: str) -> SensitivityMatrix:
    """Shift factors for the topology with line ``lc`` removed.

    The removed line keeps its row, identically zero.  Raises
    IslandingError when the removal disconnects the network.
    """
    if lc not in case.line_index:
        raise KeyError(f"unknown line {lc!r}")
    rest = [ln for ln in case.lines if ln.name != lc]
    try:
        M_rest = _ptdf_for_lines(case, rest)
    except IslandingError as exc:
        raise IslandingError(f"outage of line {lc}: {exc}") from exc
    M = np.zeros((len(case.lines), len(case.buses)))
    rest_rows = [i for i, ln in enumerate(case.lines) if ln.name != lc]
    M[rest_rows, :] = M_rest
    return SensitivityMatrix(
        matrix=M,
        line_names=tuple(ln.name for ln in case.lines),
        bus_names=case.buses,
        reference_bus=case.reference_bus,
        outage=lc,
    )


def dc_flows(sensitivity: SensitivityMatrix, injections: np.ndarray) -> np.ndarray:
    """Line flows for a balanced per-bus injection vector (MW)."""
    injections = np.asarray(injections, dtype=float)
    residual = float(injections.sum())
    if abs(residual) > BALANCE_TOL_MW:
        raise BalanceError(f"injections must sum to zero; residual {residual:.3e} MW")
    return sensitivity.matrix @ injections


class PtdfCache:
    """Lazily computed base and post-outage sensitivity matrices."""

    def __init__(self, case: GridCase):
        self.case = case
        self._cache: dict[str | None, SensitivityMatrix] = {}

    def get(self, outage: str | None = None) -> SensitivityMatrix:
        if outage not in self._cache:
            if outage is None:
                self._cache[None] = build_ptdf(self.case)
            else:
                self._cache[outage] = outage_ptdf(self.case, outage)
        return self._cache[outage]


# ---------------------------------------------------------------------------
# Case (de)serialization.  The JSON layout mirrors the dataclasses above;
# docs/case_format.md documents every field.
# ---------------------------------------------------------------------------


def case_to_dict(case: GridCase) -> dict:
    return {
        "name": case.name,
        "mva_base": case.mva_base,
        "buses": list(case.buses),
        "reference_bus": case.reference_bus,
        "horizon": case.horizon,
        "reserve_limit": case.reserve_limit,
        "lines": [
            {
                "name": ln.name,
                "from_bus": ln.from_bus,
                "to_bus": ln.to_bus,
                "susceptance": ln.susceptance,
                "capacity": ln.capacity,
            }
            for ln in case.lines
        ],
        "generators": [
            {
                "name": g.name,
                "bus": g.bus,
                "pmin": g.pmin,
                "pmax": g.pmax,
                "cost_blocks": [{"price": b.price, "size": b.size} for b in g.cost_blocks],
                "no_load_cost": g.no_load_cost,
                "reserve_price": g.reserve_price,
                "tertiary_price": g.tertiary_price,
                "startup_blocks": [
                    {"cost": b.cost, "min_off": b.min_off, "max_off": b.max_off}
                    for b in g.startup_blocks
                ],
                "ramp_up": g.ramp_up,
                "ramp_down": g.ramp_down,
                "min_up": g.min_up,
                "min_down": g.min_down,
                "initial_on": g.initial_on,
                "initial_hours_on": g.initial_hours_on,
                "initial_hours_off": g.initial_hours_off,
                "initial_output": g.initial_output,
                **({"reserve_limit": g.reserve_limit} if g.reserve_limit is not None else {}),
            }
            for g in case.generators
        ],
        "wind_farms": [
            {"bus": w.bus, "forecast": list(w.forecast), "std": list(w.std)}
            for w in case.wind_farms
        ],
        "loads": {bus: list(series) for bus, series in sorted(case.loads.items())},
        "generator_contingencies": list(case.generator_contingencies),
        "line_contingencies": list(case.line_contingencies),
    }


def case_from_dict(data: dict) -> GridCase:
    try:
        case = GridCase(
            name=data.get("name", "unnamed"),
            mva_base=float(data.get("mva_base", 100.0)),
            buses=tuple(data["buses"]),
            reference_bus=data["reference_bus"],
            lines=tuple(
                Line(
                    name=d.get("name", f"{d['from_bus']}-{d['to_bus']}"),
                    from_bus=d["from_bus"],
                    to_bus=d["to_bus"],
                    susceptance=float(d["susceptance"]),
                    capacity=float(d["capacity"]),
                )
                for d in data["lines"]
            ),
            generators=tuple(
                Generator(
                    name=d["name"],
                    bus=d["bus"],
                    pmin=float(d["pmin"]),
                    pmax=float(d["pmax"]),
                    cost_blocks=tuple(
                        CostBlock(float(b["price"]), float(b["size"]))
                        for b in d["cost_blocks"]
                    ),
                    no_load_cost=float(d["no_load_cost"]),
                    reserve_price=float(d["reserve_price"]),
                    tertiary_price=float(d["tertiary_price"]),
                    startup_blocks=tuple(
                        StartupBlock(float(b["cost"]), int(b["min_off"]), int(b["max_off"]))
                        for b in d["startup_blocks"]
                    ),
                    ramp_up=float(d["ramp_up"]),
                    ramp_down=float(d["ramp_down"]),
                    min_up=int(d["min_up"]),
                    min_down=int(d["min_down"]),
                    initial_on=bool(d["initial_on"]),
                    initial_hours_on=int(d["initial_hours_on"]),
                    initial_hours_off=int(d["initial_hours_off"]),
                    initial_output=float(d["initial_output"]),
                    reserve_limit=(
                        float(d["reserve_limit"]) if d.get("reserve_limit") is not None else None
                    ),
                )
                for d in data["generators"]
            ),
            wind_farms=tuple(
                WindFarm(
                    bus=d["bus"],
                    forecast=tuple(float(v) for v in d["forecast"]),
                    std=tuple(float(v) for v in d["std"]),
                )
                for d in data.get("wind_farms", [])
            ),
            loads={bus: tuple(float(v) for v in series) for bus, series in data["loads"].items()},
            reserve_limit=float(data["reserve_limit"]),
            generator_contingencies=tuple(data.get("generator_contingencies", [])),
            line_contingencies=tuple(data.get("line_contingencies", [])),
            horizon=int(data["horizon"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError([f"structure: {exc!r}"]) from exc
    violations = validate_case(case)
    if violations:
        raise CaseError(violations)
    return case


def load_case(path: str) -> GridCase:
    with open(path) as fh:
        return case_from_dict(json.load(fh))


def save_case(case: GridCase, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(case_to_dict(case), fh, indent=2, sort_keys=True)
        fh.write("\n")
