"""Decomposition engine.

The inner loop alternates a mixed-integer master (commitment, dispatch,
regulation reserves, probabilistic base-case flow limits handled by outer
approximation) with one linear outage-coverage problem per hour whose duals
or infeasibility rays return as optimality or feasibility cuts, until the
bound gap closes.  The outer loop screens the post-line-outage flow
constraints, which are relaxed away initially, and re-solves with the
violated ones activated until a screen comes back clean.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .formulation import (
    CommitmentSolution,
    ModelInstance,
    StateError,
    build_master,
    extract_solution,
    verify_against_extensive,
    with_tertiary,
)
from .grid import GridCase, PtdfCache, SensitivityMatrix, build_ptdf
from .solver import (
    STATUS_INFEASIBLE,
    STATUS_LIMIT,
    STATUS_UNBOUNDED,
    LinearProblem,
    SolverError,
    get_backend,
    verify_farkas,
)
from .uncertainty import ChanceSpec, LinearCut, SocConstraint, WindModel, inverse_normal_cdf, oa_cut

logger = logging.getLogger(__name__)


class ProblemInfeasibleError(RuntimeError):
    """The commitment problem itself is infeasible."""


class IterationLimitError(RuntimeError):
    """An iteration cap was hit; carries the engine state snapshot."""

    def __init__(self, message: str, state: "BendersState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass
class SolveOptions:
    benders_gap: float = 0.01
    mip_gap: float = 0.01
    oa_tol: float = 1e-6
    max_inner: int = 200
    max_outer: int = 25
    max_oa: int = 100
    threads: int = 1
    backend: str | None = None


@dataclass(frozen=True)
class OptimalityCut:
    """eta(t) >= coeffs . master-vars + rhs-constant (row sense >=).

    The audit fields record the surrogate bound implied at the generating
    master point and the subproblem optimum there; strong duality makes
    them equal.
    """

    t: int
    gamma: np.ndarray
    row: LinearCut
    rhs_constant: float
    bound_at_generation: float | None = None
    objective_at_generation: float | None = None


@dataclass(frozen=True)
class FeasibilityCut:
    """ray . subproblem-rhs(master-vars) <= 0, i.e. row sense <=.

    ``violation_at_generation`` is the (positive) amount by which the
    generating master point breaches the cut; ``problem`` keeps the
    infeasible LP so the ray stays re-verifiable.
    """

    t: int
    ray: np.ndarray
    row: LinearCut
    violation_at_generation: float | None = None
    problem: LinearProblem | None = None


@dataclass
class BendersState:
    """Cut pool, activated contingency constraints, bounds and the run log."""

    optimality_cuts: list[OptimalityCut] = field(default_factory=list)
    feasibility_cuts: list[FeasibilityCut] = field(default_factory=list)
    activated: set[tuple[str, str, int]] = field(default_factory=set)
    activated_socs: list[SocConstraint] = field(default_factory=list)
    oa_cuts: list[LinearCut] = field(default_factory=list)
    lower_bound: float = -np.inf
    upper_bound: float = np.inf
    inner_iterations: int = 0
    outer_iterations: int = 0
    log: list[dict] = field(default_factory=list)

    def gap(self) -> float:
        if not np.isfinite(self.upper_bound):
            return np.inf
        return (self.upper_bound - self.lower_bound) / max(abs(self.upper_bound), 1.0)


# ---------------------------------------------------------------------------
# Single-hour outage-coverage subproblem
# ---------------------------------------------------------------------------


@dataclass
class SubproblemResult:
    t: int
    status: str
    objective: float | None
    duals: np.ndarray | None
    ray: np.ndarray | None
    r_up: np.ndarray | None
    delta: dict[str, np.ndarray] | None  # outage -> per-generator MW, outaged unit included
    problem: LinearProblem


class SubproblemTemplate:
    """Structure of the per-hour tertiary-reserve LP.

    Variables are the tertiary reserves and, per outage, the redispatch of
    every surviving unit (the outaged unit's redispatch is its negated
    output, substituted out).  Master decisions enter only through the
    right-hand side, recorded as an affine map so cuts translate back into
    master rows: rhs = Bx x + Bp p + Br r_plus + b0(t).
    """

    def __init__(self, case: GridCase, sensitivity: SensitivityMatrix):
        self.case = case
        G = len(case.generators)
        outages = list(case.generator_contingencies)
        self.outages = outages
        self.var_names: list[tuple] = [("rup", g.name) for g in case.generators]
        self.delta_col: dict[tuple[str, str], int] = {}
        for gc in outages:
            for g in case.generators:
                if g.name == gc:
                    continue
                self.delta_col[(g.name, gc)] = len(self.var_names)
                self.var_names.append(("delta", g.name, gc))
        n = len(self.var_names)

        rows: list[tuple[np.ndarray, str, str]] = []  # (coeffs, sense, family)
        bx, bp, br, b0 = [], [], [], []

        def add(coeffs, sense, family, bx_row=None, bp_row=None, br_row=None, const=0.0):
            rows.append((coeffs, sense, family))
            bx.append(bx_row if bx_row is not None else np.zeros(G))
            bp.append(bp_row if bp_row is not None else np.zeros(G))
            br.append(br_row if br_row is not None else np.zeros(G))
            b0.append(const)

        for gi, g in enumerate(case.generators):
            coeffs = np.zeros(n)
            coeffs[gi] = 1.0
            e = np.zeros(G)
            e[gi] = case.effective_reserve_limit(g)
            add(coeffs, "<", "rup_cap", bx_row=e)
        for gc in outages:
            for gi, g in enumerate(case.generators):
                coeffs = np.zeros(n)
                if g.name == gc:
                    coeffs[gi] = -1.0  # outaged unit sheds its own output
                    e = np.zeros(G)
                    e[case.gen_index[gc]] = 1.0
                    add(coeffs, "<", "redispatch_cap", bp_row=e)
                else:
                    coeffs[self.delta_col[(g.name, gc)]] = 1.0
                    coeffs[gi] = -1.0
                    add(coeffs, "<", "redispatch_cap")
        for gi, g in enumerate(case.generators):
            coeffs = np.zeros(n)
            coeffs[:G] = -1.0
            e = np.zeros(G)
            e[gi] = -1.0
            add(coeffs, "<", "adequacy", bp_row=e)
        for gi, g in enumerate(case.generators):
            coeffs = np.zeros(n)
            coeffs[gi] = 1.0
            ex = np.zeros(G)
            ex[gi] = g.pmax
            ep = np.zeros(G)
            ep[gi] = -1.0
            add(coeffs, "<", "headroom", bx_row=ex, bp_row=ep, br_row=ep.copy())
        for gc in outages:
            coeffs = np.zeros(n)
            for g in case.generators:
                if g.name != gc:
                    coeffs[self.delta_col[(g.name, gc)]] = 1.0
            e = np.zeros(G)
            e[case.gen_index[gc]] = 1.0
            add(coeffs, "=", "conting_balance", bp_row=e)
        # Post-outage flows are deterministic in the base topology; both signs.
        gen_factors = sensitivity.matrix[:, case.gen_bus_cols]
        self._flow_fixed = np.array(
            [sensitivity.matrix @ case.fixed_injection(t) for t in range(1, case.horizon + 1)]
        )  # (T, L)
        for gc in outages:
            gci = case.gen_index[gc]
            for li, line in enumerate(case.lines):
                for sign in (+1.0, -1.0):
                    coeffs = np.zeros(n)
                    bp_row = np.zeros(G)
                    for gi, g in enumerate(case.generators):
                        f = gen_factors[li, gi]
                        if g.name != gc:
                            coeffs[self.delta_col[(g.name, gc)]] = sign * f
                            bp_row[gi] = -sign * f
                    add(coeffs, "<", "conting_flow", bp_row=bp_row, const=line.capacity)

        self.A = np.array([r[0] for r in rows])
        self.senses = np.array([r[1] for r in rows])
        self.families = [r[2] for r in rows]
        self.Bx = np.array(bx)
        self.Bp = np.array(bp)
        self.Br = np.array(br)
        self.b_const = np.array(b0)
        self.flow_row_line: list[tuple[int, int, float]] = []  # (row, line, sign)
        row_idx = [i for i, fam in enumerate(self.families) if fam == "conting_flow"]
        k = 0
        for gc in outages:
            for li in range(len(case.lines)):
                for sign in (+1.0, -1.0):
                    self.flow_row_line.append((row_idx[k], li, sign))
                    k += 1
        self.objective = np.zeros(n)
        for gi, g in enumerate(case.generators):
            self.objective[gi] = g.tertiary_price
        self.lb = np.zeros(n)
        self.ub = np.full(n, np.inf)

    def rhs(self, t: int, x_on: np.ndarray, p_out: np.ndarray, r_plus: np.ndarray) -> np.ndarray:
        b = self.b_const + self.Bx @ x_on + self.Bp @ p_out + self.Br @ r_plus
        for row, li, sign in self.flow_row_line:
            b[row] -= sign * self._flow_fixed[t - 1, li]
        return b

    def rhs_affine(self, t: int):
        """b0 with the hour's flow offsets folded in, plus the master maps."""
        b0 = self.b_const.copy()
        for row, li, sign in self.flow_row_line:
            b0[row] -= sign * self._flow_fixed[t - 1, li]
        return b0, self.Bx, self.Bp, self.Br

    def problem(self, t: int, x_on, p_out, r_plus) -> LinearProblem:
        return LinearProblem(
            c=self.objective.copy(),
            A=self.A.copy(),
            senses=self.senses.copy(),
            rhs=self.rhs(t, np.asarray(x_on, float), np.asarray(p_out, float), np.asarray(r_plus, float)),
            lb=self.lb.copy(),
            ub=self.ub.copy(),
        )


def solve_subproblem(
    t: int,
    x_on: np.ndarray,
    r_plus: np.ndarray,
    p_out: np.ndarray,
    case: GridCase | None = None,
    sensitivity: SensitivityMatrix | None = None,
    template: SubproblemTemplate | None = None,
    backend=None,
) -> SubproblemResult:
    """Solve one hour's outage-coverage LP at fixed master decisions.

    Returns row duals when optimal, or a verified infeasibility ray.
    """
    if template is None:
        if case is None or sensitivity is None:
            raise ValueError("provide a template or (case, sensitivity)")
        template = SubproblemTemplate(case, sensitivity)
    case = template.case
    backend = backend or get_backend()
    problem = template.problem(t, x_on, p_out, r_plus)
    out = backend.solve_lp(problem)
    if out.status == STATUS_UNBOUNDED:
        raise SolverError("outage-coverage LP cannot be unbounded with a finite reserve bound")
    if out.status == STATUS_INFEASIBLE:
        if out.farkas_ray is None or not verify_farkas(problem, out.farkas_ray):
            raise SolverError(f"hour {t}: infeasible subproblem without a verifiable ray")
        return SubproblemResult(t, STATUS_INFEASIBLE, None, None, out.farkas_ray, None, None, problem)
    G = len(case.generators)
    r_up = out.x[:G].copy()
    delta: dict[str, np.ndarray] = {}
    for gc in template.outages:
        d = np.zeros(G)
        for gi, g in enumerate(case.generators):
            if g.name == gc:
                d[gi] = -float(p_out[gi])
            else:
                d[gi] = out.x[template.delta_col[(g.name, gc)]]
        delta[gc] = d
    return SubproblemResult(t, out.status, float(out.objective), out.duals, None, r_up, delta, problem)


def make_optimality_cut(t: int, gamma: np.ndarray, template: SubproblemTemplate) -> OptimalityCut:
    """Translate optimal subproblem duals into a master surrogate bound."""
    case = template.case
    b0, Bx, Bp, Br = template.rhs_affine(t)
    cx = gamma @ Bx
    cp = gamma @ Bp
    cr = gamma @ Br
    const = float(gamma @ b0)
    keys = [("eta", t)]
    coeffs = [1.0]
    for gi, g in enumerate(case.generators):
        for coef, prefix in ((cx[gi], "x"), (cp[gi], "p"), (cr[gi], "rp")):
            if coef != 0.0:
                keys.append((prefix, g.name, t))
                coeffs.append(-float(coef))
    row = LinearCut(vars=tuple(keys), coeffs=tuple(coeffs), rhs=const, label=("cut_opt", t))
    return OptimalityCut(t=t, gamma=np.asarray(gamma, float), row=row, rhs_constant=const)


def make_feasibility_cut(
    t: int, ray: np.ndarray, template: SubproblemTemplate, problem: LinearProblem
) -> FeasibilityCut:
    """Translate a verified infeasibility ray into a master exclusion row."""
    if not verify_farkas(problem, ray):
        raise ValueError(f"hour {t}: ray does not certify infeasibility; cut rejected")
    case = template.case
    b0, Bx, Bp, Br = template.rhs_affine(t)
    cx = ray @ Bx
    cp = ray @ Bp
    cr = ray @ Br
    keys, coeffs = [], []
    for gi, g in enumerate(case.generators):
        for coef, prefix in ((cx[gi], "x"), (cp[gi], "p"), (cr[gi], "rp")):
            if coef != 0.0:
                keys.append((prefix, g.name, t))
                coeffs.append(float(coef))
    rhs = -float(ray @ b0)
    row = LinearCut(vars=tuple(keys), coeffs=tuple(coeffs), rhs=rhs, label=("cut_feas", t))
    return FeasibilityCut(t=t, ray=np.asarray(ray, float), row=row)


# ---------------------------------------------------------------------------
# Inner loop
# ---------------------------------------------------------------------------


def _solve_master_with_oa(
    model: ModelInstance, state: BendersState, options: SolveOptions, backend
) -> tuple:
    """Re-solve the master until every registered cone constraint holds."""
    added = 0
    for _ in range(options.max_oa):
        outcome = backend.solve_milp(model.to_problem(mip_gap=options.mip_gap))
        if outcome.status == STATUS_INFEASIBLE:
            raise ProblemInfeasibleError("master problem is infeasible")
        if outcome.status == STATUS_UNBOUNDED:
            raise SolverError("master problem is unbounded; variable bounds are missing")
        if outcome.status == STATUS_LIMIT:
            raise IterationLimitError("master solve hit a backend limit", state)
        residuals = model.soc_residuals(outcome.x)
        violated = np.flatnonzero(residuals > options.oa_tol)
        if violated.size == 0:
            return outcome, added
        for i in violated:
            cut = oa_cut(model.socs[i], model.soc_point(int(i), outcome.x), tol=options.oa_tol)
            if cut is None:
                continue
            model.add_cut_row(cut, "oa")
            state.oa_cuts.append(cut)
            added += 1
    raise IterationLimitError("outer approximation did not converge", state)


def inner_benders(
    case: GridCase,
    wind: WindModel,
    chance: ChanceSpec,
    state: BendersState,
    options: SolveOptions | None = None,
    sensitivity: SensitivityMatrix | None = None,
    template: SubproblemTemplate | None = None,
) -> CommitmentSolution:
    """Run the cut loop to convergence and return the incumbent."""
    options = options or SolveOptions()
    backend = get_backend(options.backend)
    sensitivity = sensitivity or build_ptdf(case)
    outages = bool(case.generator_contingencies)
    if outages and template is None:
        template = SubproblemTemplate(case, sensitivity)
    T = case.horizon
    gens = case.generators
    incumbent: CommitmentSolution | None = None

    for iteration in range(1, options.max_inner + 1):
        model = build_master(case, wind, chance, cuts=state, sensitivity=sensitivity)
        outcome, oa_added = _solve_master_with_oa(model, state, options, backend)
        state.lower_bound = max(state.lower_bound, float(outcome.dual_bound))

        x = outcome.x
        eta = np.array([model.value(("eta", t), x) for t in range(1, T + 1)])
        master_cost = float(outcome.objective) - float(eta.sum())
        x_on = np.array([[round(model.value(("x", g.name, t), x)) for t in range(1, T + 1)] for g in gens])
        p_out = np.array([[model.value(("p", g.name, t), x) for t in range(1, T + 1)] for g in gens])
        r_plus = np.array([[model.value(("rp", g.name, t), x) for t in range(1, T + 1)] for g in gens])

        opt_added = feas_added = 0
        results: list[SubproblemResult | None] = [None] * T
        if outages:
            def run(t: int) -> SubproblemResult:
                return solve_subproblem(
                    t, x_on[:, t - 1], r_plus[:, t - 1], p_out[:, t - 1],
                    template=template, backend=backend,
                )

            if options.threads > 1:
                with ThreadPoolExecutor(max_workers=options.threads) as pool:
                    results = list(pool.map(run, range(1, T + 1)))
            else:
                results = [run(t) for t in range(1, T + 1)]

            gen_idx = {g.name: gi for gi, g in enumerate(gens)}

            def master_val(key) -> float:
                prefix, name, t = key
                arr = {"x": x_on, "p": p_out, "rp": r_plus}[prefix]
                return float(arr[gen_idx[name], t - 1])

            for res in results:
                if res.status == STATUS_INFEASIBLE:
                    cut = make_feasibility_cut(res.t, res.ray, template, res.problem)
                    violation = (
                        sum(c * master_val(v) for v, c in zip(cut.row.vars, cut.row.coeffs))
                        - cut.row.rhs
                    )
                    state.feasibility_cuts.append(
                        replace(cut, violation_at_generation=violation, problem=res.problem)
                    )
                    feas_added += 1
                else:
                    tol = 1e-7 * max(1.0, abs(res.objective))
                    if eta[res.t - 1] < res.objective - tol:
                        cut = make_optimality_cut(res.t, res.duals, template)
                        bound = cut.row.rhs - sum(
                            c * master_val(v)
                            for v, c in zip(cut.row.vars, cut.row.coeffs)
                            if v[0] != "eta"
                        )
                        state.optimality_cuts.append(
                            replace(
                                cut,
                                bound_at_generation=bound,
                                objective_at_generation=res.objective,
                            )
                        )
                        opt_added += 1

        all_feasible = feas_added == 0
        if all_feasible:
            tertiary_cost = sum(res.objective for res in results if res is not None) if outages else 0.0
            candidate = master_cost + tertiary_cost
            if candidate < state.upper_bound:
                state.upper_bound = candidate
                solution = extract_solution(model, outcome, case)
                if outages:
                    r_up = np.column_stack([res.r_up for res in results])
                    delta = {
                        gc: np.column_stack([res.delta[gc] for res in results])
                        for gc in case.generator_contingencies
                    }
                    solution = with_tertiary(solution, case, r_up, delta, gap=state.gap())
                incumbent = solution

        state.inner_iterations += 1
        gap = state.gap()
        state.log.append(
            {
                "type": "inner",
                "iteration": state.inner_iterations,
                "lower_bound": state.lower_bound if np.isfinite(state.lower_bound) else None,
                "upper_bound": state.upper_bound if np.isfinite(state.upper_bound) else None,
                "gap": gap if np.isfinite(gap) else None,
                "optimality_cuts_added": opt_added,
                "feasibility_cuts_added": feas_added,
                "oa_cuts_added": oa_added,
            }
        )
        logger.info(
            "inner %d: LB=%.4f UB=%.4f gap=%s cuts(opt=%d, feas=%d, oa=%d)",
            state.inner_iterations, state.lower_bound, state.upper_bound,
            f"{gap:.2%}" if np.isfinite(gap) else "inf", opt_added, feas_added, oa_added,
        )

        if np.isfinite(gap) and gap <= options.benders_gap:
            break
        if opt_added == 0 and feas_added == 0:
            # Nothing separates the master point: the residual gap is the
            # master's own MIP tolerance, so iterating cannot improve it.
            break
    else:
        raise IterationLimitError(
            f"inner loop exceeded {options.max_inner} iterations", state
        )

    if incumbent is None:
        raise IterationLimitError("inner loop terminated without a feasible incumbent", state)
    return replace(incumbent, gap=state.gap() if np.isfinite(state.gap()) else incumbent.gap)


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------


def screen_line_contingencies(
    solution: CommitmentSolution,
    case: GridCase,
    wind: WindModel,
    chance: ChanceSpec,
    ptdf_cache: PtdfCache | None = None,
    tol: float = 1e-6,
) -> list[tuple[str, str, int]]:
    """Evaluate every post-line-outage flow constraint at the solution.

    Returns the (line, outage, hour) triples whose probabilistic limit is
    violated beyond ``tol`` in either direction.
    """
    ptdf_cache = ptdf_cache or PtdfCache(case)
    z = inverse_normal_cdf(1.0 - chance.eps_line_cont)
    caps = np.array([ln.capacity for ln in case.lines])
    violated: list[tuple[str, str, int]] = []
    for lc in case.line_contingencies:
        M = ptdf_cache.get(lc).matrix
        Mg = M[:, case.gen_bus_cols]
        Mw = M[:, case.wind_bus_cols] if len(case.wind_buses) else np.zeros((len(case.lines), 0))
        lc_row = case.line_index[lc]
        for t in range(1, case.horizon + 1):
            inj = case.fixed_injection(t).copy()
            np.add.at(inj, case.gen_bus_cols, solution.p[:, t - 1])
            fbar = M @ inj
            a = Mg @ solution.alpha[:, t - 1]
            if Mw.size:
                coef = Mw - a[:, None]
                margin = z * np.sqrt(coef**2 @ (wind.sigma[:, t - 1] ** 2))
            else:
                margin = np.zeros(len(case.lines))
            resid = np.maximum(fbar, -fbar) + margin - caps
            for li in np.flatnonzero(resid > tol):
                if li == lc_row:
                    continue
                violated.append((case.lines[li].name, lc, t))
    return sorted(violated)


def _activate(
    state: BendersState,
    triples: list[tuple[str, str, int]],
    case: GridCase,
    wind: WindModel,
    chance: ChanceSpec,
    ptdf_cache: PtdfCache,
) -> None:
    from .formulation import _flow_soc_for

    for line, lc, t in sorted(triples):
        if (line, lc, t) in state.activated:
            continue
        state.activated.add((line, lc, t))
        m_lc = ptdf_cache.get(lc)
        li = case.line_index[line]
        for sign in (+1, -1):
            state.activated_socs.append(
                _flow_soc_for(case, wind, m_lc, li, t, sign, chance.eps_line_cont, "line_cont")
            )


def solve_sccuc(
    case: GridCase,
    wind: WindModel | None = None,
    chance: ChanceSpec | None = None,
    options: SolveOptions | None = None,
) -> tuple[CommitmentSolution, BendersState]:
    """Full solve: inner cut loop plus contingency screening outer loop."""
    wind = wind or WindModel.from_case(case)
    chance = chance or ChanceSpec()
    chance.validate()
    options = options or SolveOptions()
    state = BendersState()
    sensitivity = build_ptdf(case)
    ptdf_cache = PtdfCache(case)
    ptdf_cache._cache[None] = sensitivity
    template = (
        SubproblemTemplate(case, sensitivity) if case.generator_contingencies else None
    )

    solution: CommitmentSolution | None = None
    for outer in range(1, options.max_outer + 1):
        if outer > 1:
            # The feasible set shrank: the previous incumbent may violate the
            # newly activated rows, so the upper bound restarts.
            state.upper_bound = np.inf
        state.outer_iterations = outer
        solution = inner_benders(
            case, wind, chance, state, options, sensitivity=sensitivity, template=template
        )
        violated = screen_line_contingencies(
            solution, case, wind, chance, ptdf_cache, tol=options.oa_tol
        )
        fresh = [trip for trip in violated if trip not in state.activated]
        state.log.append(
            {
                "type": "outer",
                "iteration": outer,
                "violated_triples": len(fresh),
                "violated_lines": len({line for line, _, _ in fresh}),
            }
        )
        logger.info(
            "outer %d: %d violated triples on %d lines",
            outer, len(fresh), len({line for line, _, _ in fresh}),
        )
        if not fresh:
            issues = verify_against_extensive(solution, case, wind, chance, soc_tol=options.oa_tol)
            if issues:
                raise StateError(
                    "final solution failed the verification sweep:\n  " + "\n  ".join(issues)
                )
            return replace(solution, mode="cc"), state
        _activate(state, fresh, case, wind, chance, ptdf_cache)
    raise IterationLimitError(
        f"outer loop exceeded {options.max_outer} iterations; "
        f"{len(state.activated)} constraints activated",
        state,
    )
