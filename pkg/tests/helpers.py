"""Independent oracles and shared utilities for the test suite.

Everything here recomputes expected values from first principles (direct
linear solves, bisection on the error function, brute-force enumeration)
so the tests never trust the code paths they are checking.
"""

from __future__ import annotations

import math

import numpy as np

from sccuc.grid import GridCase


def direct_flows(case: GridCase, injections: np.ndarray, skip_line: str | None = None) -> np.ndarray:
    """Line flows from a direct reduced-admittance solve (the PTDF oracle)."""
    lines = [ln for ln in case.lines if ln.name != skip_line]
    n = len(case.buses)
    idx = case.bus_index
    B = np.zeros((n, n))
    for ln in lines:
        a, b = idx[ln.from_bus], idx[ln.to_bus]
        B[a, a] += ln.susceptance
        B[b, b] += ln.susceptance
        B[a, b] -= ln.susceptance
        B[b, a] -= ln.susceptance
    keep = [i for i in range(n) if i != idx[case.reference_bus]]
    theta_red = np.linalg.solve(B[np.ix_(keep, keep)], injections[keep])
    theta = np.zeros(n)
    for j, i in enumerate(keep):
        theta[i] = theta_red[j]
    flows = np.zeros(len(case.lines))
    for li, ln in enumerate(case.lines):
        if ln.name == skip_line:
            continue
        flows[li] = ln.susceptance * (theta[idx[ln.from_bus]] - theta[idx[ln.to_bus]])
    return flows


def normal_quantile_by_bisection(p: float, tol: float = 1e-13) -> float:
    """Quantile of the standard normal via bisection on math.erf."""
    cdf = lambda z: 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def brute_force_knapsack(values, weights, capacity) -> float:
    """Best total value over all subsets within the weight budget."""
    best = 0.0
    n = len(values)
    for mask in range(1 << n):
        w = sum(weights[i] for i in range(n) if mask >> i & 1)
        if w <= capacity:
            best = max(best, sum(values[i] for i in range(n) if mask >> i & 1))
    return best


def random_balanced_injection(rng: np.random.Generator, n_bus: int, scale: float = 50.0) -> np.ndarray:
    v = rng.normal(0.0, scale, n_bus)
    return v - v.mean()


def solve_extensive_oracle(case, wind, chance, mip_gap=0.0, oa_tol=1e-6):
    """Monolithic reference solve used to cross-check the decomposition."""
    from sccuc.benders import BendersState, SolveOptions, _solve_master_with_oa
    from sccuc.formulation import build_extensive_form, extract_solution
    from sccuc.solver import get_backend

    model = build_extensive_form(case, wind, chance)
    outcome, _ = _solve_master_with_oa(
        model, BendersState(), SolveOptions(mip_gap=mip_gap, oa_tol=oa_tol), get_backend()
    )
    return extract_solution(model, outcome, case), model, outcome
