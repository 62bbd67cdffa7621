"""Optimization model builders for the commitment problem.

Three related models share one constraint kitchen:

* the decomposition master: commitment, dispatch, regulation reserves and
  participation factors, probabilistic flow limits managed by outer
  approximation, per-hour surrogate variables bounded by accumulated cuts;
* the extensive form: every constraint of every contingency in one MILP,
  used as a small-scale correctness oracle;
* the deterministic counterpart: probabilistic limits evaluated at zero
  deviation plus a nominal reserve rule, all N-1 rows retained.

Variables are keyed by tuples such as ("p", gen, t) with hours 1-based.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .grid import GridCase, PtdfCache, SensitivityMatrix, build_ptdf, case_to_dict
from .solver import LinearProblem, SolveOutcome
from .uncertainty import (
    ChanceSpec,
    LinearCut,
    SocConstraint,
    WindModel,
    flow_soc,
    reserve_cc_linear,
)

BALANCE_CHECK_TOL_MW = 1e-6
ROW_CHECK_TOL = 1e-4  # absorbs MILP integrality and LP feasibility tolerances

MASTER = "master"
EXTENSIVE = "extensive"
DETERMINISTIC = "deterministic"

# Startup blocks are given with finite off-time ranges; the final block is
# open-ended so arbitrarily long outages still select it.
_OPEN_ENDED = 10**9


class BuildError(ValueError):
    """Raised when case data makes a model unbuildable."""


class StateError(RuntimeError):
    """Raised when a result is requested from an unsolved model."""


class VariableCatalog:
    """Registry of decision variables with bounds and integrality."""

    def __init__(self):
        self._index: dict = {}
        self.keys: list = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []

    def add(self, key, lb: float, ub: float, integer: bool = False) -> int:
        if key in self._index:
            raise BuildError(f"duplicate variable {key!r}")
        if lb > ub:
            raise BuildError(f"variable {key!r} has empty bound range [{lb}, {ub}]")
        col = len(self.keys)
        self._index[key] = col
        self.keys.append(key)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(integer))
        return col

    def index(self, key) -> int:
        return self._index[key]

    def fix(self, key, value: float) -> None:
        col = self._index[key]
        self.lb[col] = float(value)
        self.ub[col] = float(value)

    def __contains__(self, key) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self.keys)


class ModelInstance:
    """A linear/mixed-integer model plus its registry of cone constraints."""

    def __init__(self, label: str, catalog: VariableCatalog):
        self.label = label
        self.catalog = catalog
        self.rows: list[tuple[np.ndarray, np.ndarray, str, float, str]] = []
        self.objective: dict[int, float] = {}
        self.socs: list[SocConstraint] = []
        self._soc_cols: list[tuple[np.ndarray, np.ndarray]] = []

    # -- construction -----------------------------------------------------

    def set_objective(self, key, coeff: float) -> None:
        self.objective[self.catalog.index(key)] = float(coeff)

    def add_row(self, keys: Sequence, coeffs: Sequence[float], sense: str, rhs: float, family: str) -> None:
        cols = np.array([self.catalog.index(k) for k in keys], dtype=int)
        vals = np.asarray(list(coeffs), dtype=float)
        self.rows.append((cols, vals, sense, float(rhs), family))

    def add_cut_row(self, cut: LinearCut, family: str) -> None:
        self.add_row(cut.vars, cut.coeffs, "<", cut.rhs, family)

    def register_soc(self, soc: SocConstraint) -> None:
        """Track a cone constraint for outer approximation.

        The affine relaxation (cone term dropped, which only relaxes) is
        added immediately so the zero-deviation limit always holds.
        """
        affine_cols = np.array([self.catalog.index(k) for k in soc.affine_vars], dtype=int)
        conic_cols = np.array([self.catalog.index(k) for k in soc.conic_vars], dtype=int)
        self.socs.append(soc)
        self._soc_cols.append((affine_cols, conic_cols))
        self.add_row(soc.affine_vars, soc.affine_coeffs, "<", soc.bound - soc.affine_const, "flow_affine")

    # -- evaluation --------------------------------------------------------

    def value(self, key, x: np.ndarray) -> float:
        return float(x[self.catalog.index(key)])

    def point(self, x: np.ndarray) -> dict:
        return {k: float(x[i]) for i, k in enumerate(self.catalog.keys)}

    def soc_point(self, i: int, x: np.ndarray) -> dict:
        soc = self.socs[i]
        affine_cols, conic_cols = self._soc_cols[i]
        pt = {k: float(x[c]) for k, c in zip(soc.affine_vars, affine_cols)}
        pt.update({k: float(x[c]) for k, c in zip(soc.conic_vars, conic_cols)})
        return pt

    def soc_residuals(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(self.socs))
        for i, soc in enumerate(self.socs):
            affine_cols, conic_cols = self._soc_cols[i]
            affine = soc.affine_const + float(np.dot(soc.affine_coeffs, x[affine_cols]))
            u = soc.conic_matrix @ x[conic_cols] + soc.conic_offset if conic_cols.size else soc.conic_offset
            out[i] = affine + soc.z * float(np.linalg.norm(u)) - soc.bound
        return out

    def row_count_by_family(self) -> Counter:
        return Counter(family for *_rest, family in self.rows)

    # -- export ------------------------------------------------------------

    def to_problem(self, mip_gap: Optional[float] = None, relax: bool = False) -> LinearProblem:
        n = len(self.catalog)
        m = len(self.rows)
        A = np.zeros((m, n))
        senses = np.empty(m, dtype="<U1")
        rhs = np.zeros(m)
        for j, (cols, vals, sense, b, _family) in enumerate(self.rows):
            np.add.at(A[j], cols, vals)
            senses[j] = sense
            rhs[j] = b
        c = np.zeros(n)
        for col, coeff in self.objective.items():
            c[col] = coeff
        integrality = None if relax else np.array(self.catalog.integer, dtype=bool)
        return LinearProblem(
            c=c,
            A=A,
            senses=senses,
            rhs=rhs,
            lb=np.array(self.catalog.lb),
            ub=np.array(self.catalog.ub),
            integrality=integrality,
            mip_gap=mip_gap,
        )


# ---------------------------------------------------------------------------
# Shared constraint kitchen
# ---------------------------------------------------------------------------


def _initial_fix_window(gen, horizon: int) -> int:
    """Hours at the start of the horizon pinned to the initial status."""
    if gen.initial_on:
        must_run = max(0, gen.min_up - gen.initial_hours_on)
    else:
        must_run = max(0, gen.min_down - gen.initial_hours_off)
    return min(horizon, must_run)


def _build_common(
    model: ModelInstance,
    case: GridCase,
    wind: WindModel,
    chance: Optional[ChanceSpec],
    tertiary: bool,
) -> None:
    """Commitment, dispatch, reserve and balance rows shared by all models.

    ``chance`` None means the deterministic counterpart: the reserve
    adequacy rows degenerate away (zero deviation needs zero response).
    ``tertiary`` controls whether tertiary-reserve machinery exists; it is
    dropped entirely when there are no generator contingencies so the model
    reduces to the plain chance-constrained commitment problem.
    """
    T = case.horizon
    cat = model.catalog

    for g in case.generators:
        if g.pmin > g.pmax:
            raise BuildError(f"generator {g.name}: pmin > pmax")
        R = case.effective_reserve_limit(g)
        r_ub = min(R, g.pmax)
        at_reference = g.bus == case.reference_bus
        for t in range(1, T + 1):
            cat.add(("x", g.name, t), 0, 1, integer=True)
            cat.add(("y", g.name, t), 0, 1, integer=True)
            cat.add(("z", g.name, t), 0, 1, integer=True)
            for s in range(len(g.startup_blocks)):
                cat.add(("w", g.name, s, t), 0, 1, integer=True)
            cat.add(("p", g.name, t), 0.0, g.pmax)
            for k in range(len(g.cost_blocks)):
                cat.add(("gk", g.name, k, t), 0.0, g.cost_blocks[k].size)
            sc_ub = max((b.cost for b in g.startup_blocks), default=0.0)
            cat.add(("sc", g.name, t), 0.0, sc_ub)
            cat.add(("rp", g.name, t), 0.0, r_ub)
            cat.add(("rm", g.name, t), 0.0, r_ub)
            if tertiary:
                cat.add(("rup", g.name, t), 0.0, r_ub)
            # Units at the reference bus never participate in deviation response.
            cat.add(("alpha", g.name, t), 0.0, 0.0 if at_reference else 1.0)
        fix = _initial_fix_window(g, T)
        for t in range(1, fix + 1):
            cat.fix(("x", g.name, t), 1.0 if g.initial_on else 0.0)

    for g in case.generators:
        for t in range(1, T + 1):
            model.set_objective(("x", g.name, t), g.no_load_cost)
            model.set_objective(("sc", g.name, t), 1.0)
            for k, blk in enumerate(g.cost_blocks):
                model.set_objective(("gk", g.name, k, t), blk.price)
            model.set_objective(("rp", g.name, t), g.reserve_price)
            model.set_objective(("rm", g.name, t), g.reserve_price)

    for g in case.generators:
        R = case.effective_reserve_limit(g)
        on0 = 1.0 if g.initial_on else 0.0
        for t in range(1, T + 1):
            x, y, z = ("x", g.name, t), ("y", g.name, t), ("z", g.name, t)
            p, rp, rm = ("p", g.name, t), ("rp", g.name, t), ("rm", g.name, t)
            alpha = ("alpha", g.name, t)
            if t == 1:
                model.add_row([y, z, x], [1, -1, -1], "=", -on0, "logic_transition")
            else:
                model.add_row(
                    [y, z, x, ("x", g.name, t - 1)], [1, -1, -1, 1], "=", 0.0, "logic_transition"
                )
            model.add_row([y, z], [1, 1], "<", 1.0, "logic_exclusive")

            model.add_row([rp, x], [1, -R], "<", 0.0, "reserve_cap")
            model.add_row([rm, x], [1, -R], "<", 0.0, "reserve_cap")
            if tertiary:
                model.add_row([("rup", g.name, t), x], [1, -R], "<", 0.0, "reserve_cap")

            model.add_row([p, rm, x], [-1, 1, g.pmin], "<", 0.0, "gen_min")
            if tertiary:
                model.add_row(
                    [p, rp, ("rup", g.name, t), x], [1, 1, 1, -g.pmax], "<", 0.0, "gen_max"
                )
            else:
                model.add_row([p, rp, x], [1, 1, -g.pmax], "<", 0.0, "gen_max")

            if chance is not None:
                sig = wind.sigma_total(t)
                model.add_cut_row(
                    reserve_cc_linear(alpha, rm, chance.eps_gen, sig, ("gen_dn", g.name, t)),
                    "reserve_cc",
                )
                model.add_cut_row(
                    reserve_cc_linear(alpha, rp, chance.eps_gen, sig, ("gen_up", g.name, t)),
                    "reserve_cc",
                )

            model.add_row([alpha, x], [1, -1], "<", 0.0, "participation_cap")

            gk = [("gk", g.name, k, t) for k in range(len(g.cost_blocks))]
            model.add_row([p, *gk], [1.0] + [-1.0] * len(gk), "=", 0.0, "production_split")
            for k, blk in enumerate(g.cost_blocks):
                model.add_row([gk[k], x], [1, -blk.size], "<", 0.0, "block_cap")

            blocks = g.startup_blocks
            if blocks:
                ws = [("w", g.name, s, t) for s in range(len(blocks))]
                model.add_row([*ws, y], [1.0] * len(ws) + [-1.0], "=", 0.0, "startup_choice")
                for s, blk in enumerate(blocks):
                    hi = blk.max_off if s < len(blocks) - 1 else _OPEN_ENDED
                    zs = [
                        ("z", g.name, t - n)
                        for n in range(blk.min_off, min(hi, t - 1) + 1)
                    ]
                    hist = 0.0
                    if not g.initial_on and blk.min_off <= t - 1 + g.initial_hours_off <= hi:
                        hist = 1.0
                    model.add_row(
                        [ws[s], *zs], [1.0] + [-1.0] * len(zs), "<", hist, "startup_lookback"
                    )
                model.add_row(
                    [("sc", g.name, t), *ws],
                    [1.0] + [-b.cost for b in blocks],
                    "=",
                    0.0,
                    "startup_cost",
                )
            else:
                cat.fix(("sc", g.name, t), 0.0)

            ys = [("y", g.name, n) for n in range(max(1, t - g.min_up + 1), t + 1)]
            model.add_row([*ys, x], [1.0] * len(ys) + [-1.0], "<", 0.0, "min_up")
            zs = [("z", g.name, n) for n in range(max(1, t - g.min_down + 1), t + 1)]
            model.add_row([*zs, x], [1.0] * len(zs) + [1.0], "<", 1.0, "min_down")

            if t == 1:
                # First-hour ramps measure against the pre-horizon output; a
                # starting (stopping) unit may additionally move by pmin.
                model.add_row(
                    [p, y], [1, -g.pmin], "<", g.ramp_up + g.initial_output, "ramp_up"
                )
                model.add_row(
                    [p, z], [-1, -g.pmin], "<", g.ramp_down - g.initial_output, "ramp_down"
                )
            else:
                prev = ("p", g.name, t - 1)
                model.add_row([p, prev], [1, -1], "<", g.ramp_up, "ramp_up")
                model.add_row([prev, p], [1, -1], "<", g.ramp_down, "ramp_down")

    if tertiary:
        for t in range(1, T + 1):
            rups = [("rup", g.name, t) for g in case.generators]
            for g in case.generators:
                model.add_row(
                    [("p", g.name, t), *rups],
                    [1.0] + [-1.0] * len(rups),
                    "<",
                    0.0,
                    "tertiary_adequacy",
                )

    d_total = case.load_matrix.sum(axis=0)
    mu_total = case.wind_forecast_matrix.sum(axis=0)
    for t in range(1, T + 1):
        alphas = [("alpha", g.name, t) for g in case.generators]
        model.add_row(alphas, [1.0] * len(alphas), "=", 1.0, "participation_total")
        ps = [("p", g.name, t) for g in case.generators]
        model.add_row(ps, [1.0] * len(ps), "=", float(d_total[t - 1] - mu_total[t - 1]), "power_balance")


def _flow_soc_for(
    case: GridCase,
    wind: WindModel,
    sensitivity: SensitivityMatrix,
    line_idx: int,
    t: int,
    sign: int,
    epsilon: float,
    family: str,
) -> SocConstraint:
    line = case.lines[line_idx]
    return flow_soc(
        m_row=sensitivity.matrix[line_idx],
        gen_bus_cols=case.gen_bus_cols,
        wind_bus_cols=case.wind_bus_cols,
        sigma=wind.sigma[:, t - 1] if wind.sigma.size else np.zeros(0),
        epsilon=epsilon,
        fmax=line.capacity,
        sign=sign,
        p_vars=[("p", g.name, t) for g in case.generators],
        alpha_vars=[("alpha", g.name, t) for g in case.generators],
        fixed_injection=case.fixed_injection(t),
        label=(family, line.name, t, sensitivity.outage, sign),
    )


def _add_base_flow_socs(model, case, wind, chance, sensitivity) -> None:
    for li in range(len(case.lines)):
        for t in range(1, case.horizon + 1):
            for sign in (+1, -1):
                model.register_soc(
                    _flow_soc_for(case, wind, sensitivity, li, t, sign, chance.eps_line, "line")
                )


def _add_contingency_rows(model: ModelInstance, case: GridCase, sensitivity: SensitivityMatrix) -> None:
    """Hard generator-outage rows: redispatch, balance, post-outage flows."""
    T = case.horizon
    cat = model.catalog
    for gc in case.generator_contingencies:
        gcg = case.generators[case.gen_index[gc]]
        for g in case.generators:
            R = case.effective_reserve_limit(g)
            for t in range(1, T + 1):
                if g.name == gc:
                    cat.add(("delta", g.name, gc, t), -gcg.pmax, 0.0)
                else:
                    cat.add(("delta", g.name, gc, t), 0.0, min(R, g.pmax))
    mu_minus_d = [case.fixed_injection(t) for t in range(1, T + 1)]
    for gc in case.generator_contingencies:
        for t in range(1, T + 1):
            for g in case.generators:
                model.add_row(
                    [("delta", g.name, gc, t), ("rup", g.name, t)],
                    [1, -1],
                    "<",
                    0.0,
                    "redispatch_cap",
                )
            deltas = [("delta", g.name, gc, t) for g in case.generators]
            model.add_row(deltas, [1.0] * len(deltas), "=", 0.0, "conting_balance")
            model.add_row(
                [("delta", gc, gc, t), ("p", gc, t)], [1, 1], "=", 0.0, "conting_outage"
            )
            for li, line in enumerate(case.lines):
                factors = sensitivity.matrix[li][case.gen_bus_cols]
                base = float(sensitivity.matrix[li] @ mu_minus_d[t - 1])
                keys = [("p", g.name, t) for g in case.generators] + deltas
                coeffs = list(factors) + list(factors)
                model.add_row(keys, coeffs, "<", line.capacity - base, "conting_flow")
                model.add_row(keys, [-c for c in coeffs], "<", line.capacity + base, "conting_flow")


# ---------------------------------------------------------------------------
# Public builders
# ---------------------------------------------------------------------------


def build_master(
    case: GridCase,
    wind: WindModel,
    chance: ChanceSpec,
    cuts=None,
    sensitivity: Optional[SensitivityMatrix] = None,
) -> ModelInstance:
    """Decomposition master: commitment plus cut pool and managed cones.

    ``cuts`` carries the accumulated optimality/feasibility cut rows, the
    activated post-outage flow cones, and retained outer-approximation
    rows; pass None for a fresh start.
    """
    sensitivity = sensitivity or build_ptdf(case)
    tertiary = bool(case.generator_contingencies)
    model = ModelInstance(MASTER, VariableCatalog())
    _build_common(model, case, wind, chance, tertiary)

    eta_ub = sum(
        g.tertiary_price * min(case.effective_reserve_limit(g), g.pmax) for g in case.generators
    )
    for t in range(1, case.horizon + 1):
        model.catalog.add(("eta", t), 0.0, max(eta_ub, 0.0))
        model.set_objective(("eta", t), 1.0)

    _add_base_flow_socs(model, case, wind, chance, sensitivity)

    if cuts is not None:
        for cut in cuts.optimality_cuts:
            model.add_row(cut.row.vars, cut.row.coeffs, ">", cut.row.rhs, "cut_opt")
        for cut in cuts.feasibility_cuts:
            model.add_cut_row(cut.row, "cut_feas")
        for soc in cuts.activated_socs:
            model.register_soc(soc)
        for oa in cuts.oa_cuts:
            model.add_cut_row(oa, "oa")
    return model


def build_extensive_form(
    case: GridCase,
    wind: WindModel,
    chance: ChanceSpec,
    sensitivity: Optional[SensitivityMatrix] = None,
    ptdf_cache: Optional[PtdfCache] = None,
) -> ModelInstance:
    """Monolithic model with every constraint family; the small-scale oracle."""
    sensitivity = sensitivity or build_ptdf(case)
    ptdf_cache = ptdf_cache or PtdfCache(case)
    tertiary = bool(case.generator_contingencies)
    model = ModelInstance(EXTENSIVE, VariableCatalog())
    _build_common(model, case, wind, chance, tertiary)
    if tertiary:
        for g in case.generators:
            for t in range(1, case.horizon + 1):
                model.set_objective(("rup", g.name, t), g.tertiary_price)
        _add_contingency_rows(model, case, sensitivity)
    _add_base_flow_socs(model, case, wind, chance, sensitivity)
    for lc in case.line_contingencies:
        m_lc = ptdf_cache.get(lc)
        for li in range(len(case.lines)):
            for t in range(1, case.horizon + 1):
                for sign in (+1, -1):
                    model.register_soc(
                        _flow_soc_for(
                            case, wind, m_lc, li, t, sign, chance.eps_line_cont, "line_cont"
                        )
                    )
    return model


def build_deterministic(
    case: GridCase,
    reserve_fraction: float = 0.005,
    sensitivity: Optional[SensitivityMatrix] = None,
    ptdf_cache: Optional[PtdfCache] = None,
) -> ModelInstance:
    """Zero-deviation counterpart with a nominal reserve rule, N-1 retained."""
    if reserve_fraction < 0:
        raise BuildError("reserve_fraction must be >= 0")
    sensitivity = sensitivity or build_ptdf(case)
    ptdf_cache = ptdf_cache or PtdfCache(case)
    wind = WindModel.from_case(case)
    tertiary = bool(case.generator_contingencies)
    model = ModelInstance(DETERMINISTIC, VariableCatalog())
    _build_common(model, case, wind, None, tertiary)
    if tertiary:
        for g in case.generators:
            for t in range(1, case.horizon + 1):
                model.set_objective(("rup", g.name, t), g.tertiary_price)
        _add_contingency_rows(model, case, sensitivity)

    def add_det_flow(m: SensitivityMatrix, family: str) -> None:
        skip = m.outage
        for li, line in enumerate(case.lines):
            if skip is not None and line.name == skip:
                continue
            factors = m.matrix[li][case.gen_bus_cols]
            for t in range(1, case.horizon + 1):
                base = float(m.matrix[li] @ case.fixed_injection(t))
                ps = [("p", g.name, t) for g in case.generators]
                model.add_row(ps, list(factors), "<", line.capacity - base, family)
                model.add_row(ps, [-f for f in factors], "<", line.capacity + base, family)

    add_det_flow(sensitivity, "flow_det")
    for lc in case.line_contingencies:
        add_det_flow(ptdf_cache.get(lc), "flow_det_cont")

    d_total = case.load_matrix.sum(axis=0)
    for t in range(1, case.horizon + 1):
        rps = [("rp", g.name, t) for g in case.generators]
        rms = [("rm", g.name, t) for g in case.generators]
        need = reserve_fraction * float(d_total[t - 1])
        model.add_row(rps, [1.0] * len(rps), ">", need, "nominal_reserve")
        model.add_row(rms, [1.0] * len(rms), ">", need, "nominal_reserve")
    return model


# ---------------------------------------------------------------------------
# Solution extraction
# ---------------------------------------------------------------------------


def case_fingerprint(case: GridCase) -> str:
    payload = json.dumps(case_to_dict(case), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class CommitmentSolution:
    """Schedules, dispatch, reserves and costs of one solved instance."""

    case_name: str
    case_fingerprint: str
    mode: str
    horizon: int
    generator_names: tuple[str, ...]
    on: np.ndarray  # (G, T) ints
    start: np.ndarray
    stop: np.ndarray
    startup_block: np.ndarray  # (G, T) block index chosen at startup, -1 otherwise
    p: np.ndarray  # (G, T) MW
    block_output: dict[str, np.ndarray]  # per generator (K_g, T) MW
    alpha: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    r_up: np.ndarray
    delta: dict[str, np.ndarray]  # outage name -> (G, T) MW
    objective: float
    cost_components: dict[str, np.ndarray]  # component -> (T,) $
    gap: float

    def gen_row(self, name: str) -> int:
        return self.generator_names.index(name)

    def total_costs(self) -> dict[str, float]:
        return {k: float(v.sum()) for k, v in self.cost_components.items()}

    def total_generation_reserve_mw(self) -> float:
        return float(self.r_plus.sum() + self.r_minus.sum())

    def to_dict(self) -> dict:
        return {
            "case_name": self.case_name,
            "case_fingerprint": self.case_fingerprint,
            "mode": self.mode,
            "horizon": self.horizon,
            "generators": list(self.generator_names),
            "on": self.on.astype(int).tolist(),
            "start": self.start.astype(int).tolist(),
            "stop": self.stop.astype(int).tolist(),
            "startup_block": self.startup_block.astype(int).tolist(),
            "p": self.p.tolist(),
            "block_output": {g: arr.tolist() for g, arr in sorted(self.block_output.items())},
            "alpha": self.alpha.tolist(),
            "r_plus": self.r_plus.tolist(),
            "r_minus": self.r_minus.tolist(),
            "r_up": self.r_up.tolist(),
            "delta": {gc: arr.tolist() for gc, arr in sorted(self.delta.items())},
            "objective": self.objective,
            "cost_components": {k: v.tolist() for k, v in sorted(self.cost_components.items())},
            "gap": self.gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommitmentSolution":
        return cls(
            case_name=d["case_name"],
            case_fingerprint=d["case_fingerprint"],
            mode=d["mode"],
            horizon=int(d["horizon"]),
            generator_names=tuple(d["generators"]),
            on=np.array(d["on"], dtype=int),
            start=np.array(d["start"], dtype=int),
            stop=np.array(d["stop"], dtype=int),
            startup_block=np.array(d["startup_block"], dtype=int),
            p=np.array(d["p"], dtype=float),
            block_output={g: np.array(v, dtype=float) for g, v in d["block_output"].items()},
            alpha=np.array(d["alpha"], dtype=float),
            r_plus=np.array(d["r_plus"], dtype=float),
            r_minus=np.array(d["r_minus"], dtype=float),
            r_up=np.array(d["r_up"], dtype=float),
            delta={gc: np.array(v, dtype=float) for gc, v in d["delta"].items()},
            objective=float(d["objective"]),
            cost_components={k: np.array(v, dtype=float) for k, v in d["cost_components"].items()},
            gap=float(d["gap"]),
        )

    def point(self, case: GridCase) -> dict:
        """Variable assignment usable against any model built from the case."""
        pt: dict = {}
        for gi, g in enumerate(case.generators):
            for t in range(1, self.horizon + 1):
                pt[("x", g.name, t)] = float(self.on[gi, t - 1])
                pt[("y", g.name, t)] = float(self.start[gi, t - 1])
                pt[("z", g.name, t)] = float(self.stop[gi, t - 1])
                for s in range(len(g.startup_blocks)):
                    pt[("w", g.name, s, t)] = 1.0 if self.startup_block[gi, t - 1] == s else 0.0
                pt[("p", g.name, t)] = float(self.p[gi, t - 1])
                for k in range(len(g.cost_blocks)):
                    pt[("gk", g.name, k, t)] = float(self.block_output[g.name][k, t - 1])
                chosen = self.startup_block[gi, t - 1]
                pt[("sc", g.name, t)] = (
                    g.startup_blocks[chosen].cost if chosen >= 0 else 0.0
                )
                pt[("rp", g.name, t)] = float(self.r_plus[gi, t - 1])
                pt[("rm", g.name, t)] = float(self.r_minus[gi, t - 1])
                pt[("rup", g.name, t)] = float(self.r_up[gi, t - 1])
                pt[("alpha", g.name, t)] = float(self.alpha[gi, t - 1])
                for gc, arr in self.delta.items():
                    pt[("delta", g.name, gc, t)] = float(arr[gi, t - 1])
        return pt


def extract_solution(model: ModelInstance, outcome: SolveOutcome, case: GridCase) -> CommitmentSolution:
    """Read a solved model into a CommitmentSolution.

    Master-labelled models carry surrogate tertiary machinery whose values
    are placeholders; the decomposition engine overwrites them with the
    reserves recovered from the final single-hour problems.
    """
    if outcome.x is None:
        raise StateError(f"model is not solved (status {outcome.status})")
    x = outcome.x
    T = case.horizon
    G = len(case.generators)
    names = tuple(g.name for g in case.generators)

    def arr(prefix, dtype=float):
        out = np.zeros((G, T), dtype=dtype)
        for gi, g in enumerate(case.generators):
            for t in range(1, T + 1):
                key = (prefix, g.name, t)
                if key in model.catalog:
                    out[gi, t - 1] = model.value(key, x)
        return out

    on = (arr("x") > 0.5).astype(int)
    start = (arr("y") > 0.5).astype(int)
    stop = (arr("z") > 0.5).astype(int)
    p = arr("p")
    alpha = arr("alpha")
    r_plus, r_minus = arr("rp"), arr("rm")
    r_up = arr("rup")
    if model.label == MASTER:
        r_up = np.zeros_like(r_up)  # surrogate values, replaced downstream

    startup_block = -np.ones((G, T), dtype=int)
    block_output: dict[str, np.ndarray] = {}
    for gi, g in enumerate(case.generators):
        K = len(g.cost_blocks)
        bo = np.zeros((K, T))
        for t in range(1, T + 1):
            for k in range(K):
                bo[k, t - 1] = model.value(("gk", g.name, k, t), x)
            if start[gi, t - 1]:
                for s in range(len(g.startup_blocks)):
                    if model.value(("w", g.name, s, t), x) > 0.5:
                        startup_block[gi, t - 1] = s
                        break
        block_output[g.name] = bo

    delta: dict[str, np.ndarray] = {}
    for gc in case.generator_contingencies:
        key = ("delta", names[0], gc, 1)
        if key in model.catalog:
            dm = np.zeros((G, T))
            for gi, g in enumerate(case.generators):
                for t in range(1, T + 1):
                    dm[gi, t - 1] = model.value(("delta", g.name, gc, t), x)
            delta[gc] = dm

    alpha_sums = alpha.sum(axis=0)
    if (np.abs(alpha_sums - 1.0) > 1e-5).any():
        raise StateError(f"participation factors do not normalize: {alpha_sums}")
    imbalance = p.sum(axis=0) - (case.load_matrix.sum(axis=0) - case.wind_forecast_matrix.sum(axis=0))
    if (np.abs(imbalance) > BALANCE_CHECK_TOL_MW).any():
        raise StateError(f"hourly power balance violated by {imbalance}")

    no_load = np.zeros(T)
    startup = np.zeros(T)
    production = np.zeros(T)
    gen_reserve = np.zeros(T)
    tertiary = np.zeros(T)
    for gi, g in enumerate(case.generators):
        no_load += g.no_load_cost * on[gi]
        for t in range(1, T + 1):
            s = startup_block[gi, t - 1]
            if s >= 0:
                startup[t - 1] += g.startup_blocks[s].cost
        for k, blk in enumerate(g.cost_blocks):
            production += blk.price * block_output[g.name][k]
        gen_reserve += g.reserve_price * (r_plus[gi] + r_minus[gi])
        tertiary += g.tertiary_price * r_up[gi]

    components = {
        "no_load": no_load,
        "startup": startup,
        "production": production,
        "generation_reserve": gen_reserve,
        "tertiary_reserve": tertiary,
    }
    objective = float(outcome.objective)
    if model.label == MASTER:
        eta_total = sum(
            model.value(("eta", t), x) for t in range(1, T + 1) if ("eta", t) in model.catalog
        )
        objective -= float(eta_total)

    return CommitmentSolution(
        case_name=case.name,
        case_fingerprint=case_fingerprint(case),
        mode=model.label,
        horizon=T,
        generator_names=names,
        on=on,
        start=start,
        stop=stop,
        startup_block=startup_block,
        p=p,
        block_output=block_output,
        alpha=alpha,
        r_plus=r_plus,
        r_minus=r_minus,
        r_up=r_up,
        delta=delta,
        objective=objective,
        cost_components=components,
        gap=float(outcome.gap) if outcome.gap is not None else 0.0,
    )


def with_tertiary(
    solution: CommitmentSolution,
    case: GridCase,
    r_up: np.ndarray,
    delta: dict[str, np.ndarray],
    gap: float,
) -> CommitmentSolution:
    """Attach recovered tertiary reserves and redispatch to a master solution."""
    tertiary = np.zeros(solution.horizon)
    for gi, g in enumerate(case.generators):
        tertiary += g.tertiary_price * r_up[gi]
    components = dict(solution.cost_components)
    components["tertiary_reserve"] = tertiary
    return replace(
        solution,
        r_up=r_up,
        delta=delta,
        objective=solution.objective + float(tertiary.sum()),
        cost_components=components,
        gap=gap,
    )


def verify_against_extensive(
    solution: CommitmentSolution,
    case: GridCase,
    wind: WindModel,
    chance: ChanceSpec,
    soc_tol: float = 1e-6,
    row_tol: float = ROW_CHECK_TOL,
) -> list[str]:
    """Check every extensive-form constraint at the solution point.

    Returns diagnostics for violated rows or cones (empty means the sweep
    passed).  Used as the final gate of the decomposition.
    """
    model = build_extensive_form(case, wind, chance)
    pt = solution.point(case)
    x = np.array([pt[k] for k in model.catalog.keys])
    bad: list[str] = []
    for cols, vals, sense, rhs, family in model.rows:
        lhs = float(vals @ x[cols])
        if sense == "<" and lhs > rhs + row_tol:
            bad.append(f"{family}: {lhs:.6f} </= {rhs:.6f}")
        elif sense == ">" and lhs < rhs - row_tol:
            bad.append(f"{family}: {lhs:.6f} >/= {rhs:.6f}")
        elif sense == "=" and abs(lhs - rhs) > row_tol:
            bad.append(f"{family}: {lhs:.6f} != {rhs:.6f}")
    residuals = model.soc_residuals(x)
    for soc, res in zip(model.socs, residuals):
        if res > soc_tol + row_tol:
            bad.append(f"soc {soc.label}: residual {res:.3e}")
    lb = np.array(model.catalog.lb)
    ub = np.array(model.catalog.ub)
    if (x < lb - row_tol).any() or (x > ub + row_tol).any():
        bad.append("variable bounds violated")
    return bad
