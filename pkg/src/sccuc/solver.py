"""Backend contract for linear and mixed-integer linear solving.

Every model in this package is solved through this boundary, and only LP and
MILP capability is required: cone constraints are outer-approximated
upstream, so infeasibility certificates only ever need to come from linear
programs.  The default backend wraps HiGHS through scipy.  Because the
wrapped interface does not expose dual rays, infeasible LPs are certified by
a deterministic phase-1 elastic solve whose optimal duals form a Farkas ray;
``verify_farkas`` checks any ray independently of how it was produced.

Dual convention: a row dual is the sensitivity of the optimal objective to
that row's right-hand side in the row's own sense (so a binding ``>=`` row
in a minimization has a non-negative dual).
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

logger = logging.getLogger(__name__)

LP_TOL = 1e-7
FARKAS_TOL = 1e-7
DEFAULT_MIP_GAP = 0.01

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE_GAP = "feasible_gap"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_LIMIT = "limit"


class SolverError(RuntimeError):
    """Numerical or backend failure, with the solver message attached."""


@dataclass
class LinearProblem:
    """Minimization problem: c.x s.t. A x (senses) rhs, lb <= x <= ub.

    ``senses`` holds '<', '>' or '=' per row.  ``integrality`` marks integer
    variables (they must have finite bounds).  ``warm_start`` is advisory;
    the HiGHS backend ignores it.
    """

    c: np.ndarray
    A: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: Optional[np.ndarray] = None
    mip_gap: Optional[float] = None
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.senses = np.asarray(self.senses)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n = self.c.shape[0]
        m = self.rhs.shape[0]
        if self.A.shape != (m, n):
            raise ValueError(f"A must be {(m, n)}, got {self.A.shape}")
        if self.senses.shape != (m,):
            raise ValueError("senses must have one entry per row")
        if not set(np.unique(self.senses)) <= {"<", ">", "="}:
            raise ValueError("senses must be '<', '>' or '='")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if self.integrality is not None:
            self.integrality = np.asarray(self.integrality, dtype=bool)
            if self.integrality.shape != (n,):
                raise ValueError("integrality must have one flag per variable")
            bad = self.integrality & ~(np.isfinite(self.lb) & np.isfinite(self.ub))
            if bad.any():
                raise ValueError("integer variables must have finite bounds")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]

    def is_mip(self) -> bool:
        return self.integrality is not None and bool(self.integrality.any())


@dataclass
class SolveOutcome:
    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    lower_rc: Optional[np.ndarray] = None
    upper_rc: Optional[np.ndarray] = None
    farkas_ray: Optional[np.ndarray] = None
    gap: Optional[float] = None
    dual_bound: Optional[float] = None
    wall_time: float = 0.0

    def dual_objective(self, problem: LinearProblem) -> float:
        """Dual value from row duals and bound reduced costs (LP only)."""
        if self.duals is None:
            raise ValueError("no duals available")
        val = float(self.duals @ problem.rhs)
        finite_lb = np.isfinite(problem.lb)
        finite_ub = np.isfinite(problem.ub)
        val += float(self.lower_rc[finite_lb] @ problem.lb[finite_lb])
        val += float(self.upper_rc[finite_ub] @ problem.ub[finite_ub])
        return val


def _split_senses(problem: LinearProblem):
    """Rows in <= orientation plus equality rows, with index bookkeeping."""
    le = problem.senses == "<"
    ge = problem.senses == ">"
    eq = problem.senses == "="
    A_ub = np.vstack([problem.A[le], -problem.A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([problem.rhs[le], -problem.rhs[ge]]) if A_ub is not None else None
    A_eq = problem.A[eq] if eq.any() else None
    b_eq = problem.rhs[eq] if A_eq is not None else None
    return le, ge, eq, A_ub, b_ub, A_eq, b_eq


class HighsBackend:
    """LP/MILP solving through scipy's HiGHS interface."""

    name = "highs"

    def solve_lp(self, problem: LinearProblem) -> SolveOutcome:
        if problem.is_mip():
            raise ValueError("solve_lp requires a problem without integrality flags")
        start = time.perf_counter()
        le, ge, eq, A_ub, b_ub, A_eq, b_eq = _split_senses(problem)
        bounds = [
            (l if np.isfinite(l) else None, u if np.isfinite(u) else None)
            for l, u in zip(problem.lb, problem.ub)
        ]
        res = linprog(
            problem.c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL},
        )
        elapsed = time.perf_counter() - start
        if res.status == 0:
            duals = np.zeros(problem.n_rows)
            if A_ub is not None:
                ub_marg = np.asarray(res.ineqlin.marginals, dtype=float)
                n_le = int(le.sum())
                duals[le] = ub_marg[:n_le]
                duals[ge] = -ub_marg[n_le:]
            if A_eq is not None:
                duals[eq] = np.asarray(res.eqlin.marginals, dtype=float)
            return SolveOutcome(
                status=STATUS_OPTIMAL,
                x=np.asarray(res.x, dtype=float),
                objective=float(res.fun),
                duals=duals,
                lower_rc=np.asarray(res.lower.marginals, dtype=float),
                upper_rc=np.asarray(res.upper.marginals, dtype=float),
                wall_time=elapsed,
            )
        if res.status == 2:
            ray = self._phase1_farkas(problem)
            return SolveOutcome(
                status=STATUS_INFEASIBLE,
                farkas_ray=ray,
                wall_time=time.perf_counter() - start,
            )
        if res.status == 3:
            return SolveOutcome(status=STATUS_UNBOUNDED, wall_time=elapsed)
        if res.status == 1:
            return SolveOutcome(status=STATUS_LIMIT, wall_time=elapsed)
        raise SolverError(f"LP solve failed: {res.message}")

    def _phase1_farkas(self, problem: LinearProblem) -> np.ndarray:
        """Farkas ray from the duals of the elastic feasibility LP.

        Each row is relaxed by a non-negative slack and the total slack is
        minimized; a positive optimum proves infeasibility and the row duals
        (in sensitivity convention) aggregate the rows into a contradiction
        that ``verify_farkas`` can check against the variable box.
        """
        m, n = problem.n_rows, problem.n_vars
        n_eq = int((problem.senses == "=").sum())
        n_slack = m + n_eq  # equalities get a second, opposite-signed slack
        A_aug = np.zeros((m, n + n_slack))
        A_aug[:, :n] = problem.A
        col = n
        eq_extra = []
        for j in range(m):
            if problem.senses[j] == "<":
                A_aug[j, col] = -1.0
            elif problem.senses[j] == ">":
                A_aug[j, col] = 1.0
            else:
                A_aug[j, col] = 1.0
                eq_extra.append(j)
            col += 1
        for j in eq_extra:
            A_aug[j, col] = -1.0
            col += 1
        c_aug = np.concatenate([np.zeros(n), np.ones(n_slack)])
        lb_aug = np.concatenate([problem.lb, np.zeros(n_slack)])
        ub_aug = np.concatenate([problem.ub, np.full(n_slack, np.inf)])
        phase1 = LinearProblem(
            c=c_aug, A=A_aug, senses=problem.senses.copy(), rhs=problem.rhs.copy(),
            lb=lb_aug, ub=ub_aug,
        )
        res = self.solve_lp(phase1)
        if res.status != STATUS_OPTIMAL:
            raise SolverError(f"phase-1 feasibility LP did not solve: {res.status}")
        if res.objective <= 1e-9 * max(1.0, float(np.abs(problem.rhs).max(initial=0.0))):
            raise SolverError("phase-1 found the problem feasible; infeasibility not certified")
        ray = res.duals.copy()
        scale = float(np.abs(ray).max())
        if scale > 0:
            ray /= scale
        if not verify_farkas(problem, ray):
            raise SolverError("phase-1 produced an unverifiable infeasibility certificate")
        return ray

    def solve_milp(self, problem: LinearProblem) -> SolveOutcome:
        start = time.perf_counter()
        lo = np.where(problem.senses == "<", -np.inf, problem.rhs)
        hi = np.where(problem.senses == ">", np.inf, problem.rhs)
        integrality = (
            problem.integrality.astype(int) if problem.integrality is not None else np.zeros(problem.n_vars, dtype=int)
        )
        gap = problem.mip_gap if problem.mip_gap is not None else DEFAULT_MIP_GAP
        constraints = LinearConstraint(problem.A, lo, hi) if problem.n_rows else ()
        res = milp(
            c=problem.c,
            constraints=constraints,
            integrality=integrality,
            bounds=Bounds(problem.lb, problem.ub),
            options={"mip_rel_gap": gap},
        )
        elapsed = time.perf_counter() - start
        if res.status == 0:
            achieved = float(res.mip_gap) if res.mip_gap is not None else 0.0
            dual_bound = (
                float(res.mip_dual_bound) if res.mip_dual_bound is not None else float(res.fun)
            )
            status = STATUS_OPTIMAL if achieved <= max(gap, 1e-9) else STATUS_FEASIBLE_GAP
            if gap > 0 and achieved > 1e-9:
                status = STATUS_FEASIBLE_GAP
            return SolveOutcome(
                status=status,
                x=np.asarray(res.x, dtype=float),
                objective=float(res.fun),
                gap=achieved,
                dual_bound=dual_bound,
                wall_time=elapsed,
            )
        if res.status == 2:
            return SolveOutcome(status=STATUS_INFEASIBLE, wall_time=elapsed)
        if res.status == 3:
            return SolveOutcome(status=STATUS_UNBOUNDED, wall_time=elapsed)
        if res.status == 1:
            x = np.asarray(res.x, dtype=float) if res.x is not None else None
            obj = float(res.fun) if res.fun is not None else None
            return SolveOutcome(status=STATUS_LIMIT, x=x, objective=obj, wall_time=elapsed)
        raise SolverError(f"MILP solve failed: {res.message}")


_BACKENDS = {"highs": HighsBackend}
_ENV_VAR = "SCCUC_SOLVER"


def get_backend(name: str | None = None):
    """Resolve a backend by name, CLI/config key, or environment variable."""
    key = name or os.environ.get(_ENV_VAR, "highs")
    try:
        return _BACKENDS[key]()
    except KeyError:
        raise SolverError(f"unknown solver backend {key!r}; available: {sorted(_BACKENDS)}")


def solve_lp(problem: LinearProblem, backend=None) -> SolveOutcome:
    backend = backend or get_backend()
    out = backend.solve_lp(problem)
    logger.debug("LP %dx%d -> %s in %.3fs", problem.n_rows, problem.n_vars, out.status, out.wall_time)
    return out


def solve_milp(problem: LinearProblem, backend=None) -> SolveOutcome:
    backend = backend or get_backend()
    out = backend.solve_milp(problem)
    logger.debug(
        "MILP %dx%d -> %s (gap %s) in %.3fs",
        problem.n_rows, problem.n_vars, out.status, out.gap, out.wall_time,
    )
    return out


def verify_farkas(problem: LinearProblem, ray: np.ndarray, tol: float = FARKAS_TOL) -> bool:
    """True iff ``ray`` certifies infeasibility of the LP within ``tol``.

    With sign-compatible multipliers (non-positive on <= rows, non-negative
    on >= rows, free on equalities), any feasible point x satisfies
    (A^T ray) . x >= ray . rhs.  The ray is a certificate when even the
    box maximum of the left side stays below ray . rhs.
    """
    ray = np.asarray(ray, dtype=float)
    if ray.shape != (problem.n_rows,):
        return False
    scale = float(np.abs(ray).max(initial=0.0))
    if scale <= 0:
        return False
    y = ray / scale
    sign_tol = 1e-9
    if (y[problem.senses == "<"] > sign_tol).any():
        return False
    if (y[problem.senses == ">"] < -sign_tol).any():
        return False
    lam = problem.A.T @ y
    coef_scale = max(1.0, float(np.abs(problem.A).max(initial=0.0)))
    lam[np.abs(lam) <= tol * coef_scale] = 0.0
    box_max = 0.0
    for i in range(problem.n_vars):
        if lam[i] > 0:
            if not np.isfinite(problem.ub[i]):
                return False
            box_max += lam[i] * problem.ub[i]
        elif lam[i] < 0:
            if not np.isfinite(problem.lb[i]):
                return False
            box_max += lam[i] * problem.lb[i]
    rhs_scale = max(1.0, float(np.abs(problem.rhs).max(initial=0.0)))
    return float(y @ problem.rhs) - box_max > tol * rhs_scale
