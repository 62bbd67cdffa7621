"""Monte Carlo out-of-sample evaluation of commitment solutions.

Draws wind deviations from configurable distributions matched to the
modelled mean (zero) and standard deviation, replays the affine response
policy and the DC flow equations on every sample, and reports empirical
violation probabilities per constraint, per class, and per hour.  The
per-hour any-violation series covers base-case (normal operation)
constraints; post-outage line limits are reported separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formulation import CommitmentSolution, case_fingerprint
from .grid import GridCase, PtdfCache
from .uncertainty import ChanceSpec, DomainError

DISTRIBUTIONS = ("normal", "laplace", "logistic", "weibull")


@dataclass(frozen=True)
class ScenarioSampler:
    """Deviation sampler matched to zero mean and the wind model's std.

    ``shape`` is the Weibull shape parameter (ignored otherwise); Weibull
    samples are scaled to the target std from the exact moment formulas and
    translated to zero mean.
    """

    distribution: str
    sigma: np.ndarray  # (wind buses, horizon) MW
    seed: int
    shape: float = 2.0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise DomainError(f"unknown distribution {self.distribution!r}; use {DISTRIBUTIONS}")
        if self.distribution == "weibull" and self.shape <= 0:
            raise DomainError(f"weibull shape must be > 0, got {self.shape}")
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))

    @classmethod
    def from_case(cls, case: GridCase, distribution: str, seed: int, shape: float = 2.0):
        return cls(distribution=distribution, sigma=case.wind_std_matrix.copy(), seed=seed, shape=shape)


def sample_deviations(sampler: ScenarioSampler, n: int) -> np.ndarray:
    """Draw n deviation panels of shape (n, wind buses, horizon), MW."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(sampler.seed)
    size = (n,) + sampler.sigma.shape
    if sampler.distribution == "normal":
        unit = rng.standard_normal(size)
    elif sampler.distribution == "laplace":
        unit = rng.laplace(0.0, 1.0, size) / math.sqrt(2.0)
    elif sampler.distribution == "logistic":
        unit = rng.logistic(0.0, 1.0, size) * math.sqrt(3.0) / math.pi
    else:
        k = sampler.shape
        m1 = math.gamma(1.0 + 1.0 / k)
        var = math.gamma(1.0 + 2.0 / k) - m1**2
        unit = (rng.weibull(k, size) - m1) / math.sqrt(var)
    return unit * sampler.sigma[None, :, :]


@dataclass
class ValidationReport:
    """Empirical violation probabilities for one sample set."""

    case_name: str
    case_fingerprint: str
    solution_mode: str
    distribution: str
    shape: float
    samples: int
    seed: int
    designed_eps: dict[str, float]
    per_constraint: dict[str, float]  # "family|element|hour|sign[|outage]" -> probability
    max_by_class: dict[str, float]
    exceeds_design: dict[str, bool]
    hourly_any_violation: list[int]

    def to_dict(self) -> dict:
        return {
            "case_name": self.case_name,
            "case_fingerprint": self.case_fingerprint,
            "solution_mode": self.solution_mode,
            "distribution": self.distribution,
            "shape": self.shape,
            "samples": self.samples,
            "seed": self.seed,
            "designed_eps": dict(sorted(self.designed_eps.items())),
            "per_constraint": dict(sorted(self.per_constraint.items())),
            "max_by_class": dict(sorted(self.max_by_class.items())),
            "exceeds_design": dict(sorted(self.exceeds_design.items())),
            "hourly_any_violation": list(self.hourly_any_violation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationReport":
        return cls(
            case_name=d["case_name"],
            case_fingerprint=d["case_fingerprint"],
            solution_mode=d["solution_mode"],
            distribution=d["distribution"],
            shape=float(d["shape"]),
            samples=int(d["samples"]),
            seed=int(d["seed"]),
            designed_eps={k: float(v) for k, v in d["designed_eps"].items()},
            per_constraint={k: float(v) for k, v in d["per_constraint"].items()},
            max_by_class={k: float(v) for k, v in d["max_by_class"].items()},
            exceeds_design={k: bool(v) for k, v in d["exceeds_design"].items()},
            hourly_any_violation=[int(v) for v in d["hourly_any_violation"]],
        )


def _binomial_band(eps: float, n: int) -> float:
    return 3.0 * math.sqrt(eps * (1.0 - eps) / n)


def evaluate_solution(
    solution: CommitmentSolution,
    case: GridCase,
    ptdf_cache: PtdfCache,
    samples: np.ndarray,
    chance: ChanceSpec | None = None,
    distribution: str = "normal",
    shape: float = 2.0,
    seed: int = 0,
) -> ValidationReport:
    """Replay the affine response on every sample and count violations.

    Per sample, each generator absorbs its participation share of the total
    deviation (checked against its held reserves), base-case flows follow
    the shift factors, and post-outage flows follow the outage topology's
    shift factors at unchanged schedules.
    """
    chance = chance or ChanceSpec()
    if samples.ndim != 3 or samples.shape[1:] != (len(case.wind_buses), case.horizon):
        raise ValueError(
            f"samples must have shape (n, {len(case.wind_buses)}, {case.horizon})"
        )
    n = samples.shape[0]
    T = case.horizon
    omega = samples.sum(axis=1)  # (n, T) total deviation

    per: dict[str, float] = {}
    alpha, rp, rm = solution.alpha, solution.r_plus, solution.r_minus

    # Regulation reserve shortfalls: down-reserve covers positive total
    # deviation times the unit's share; up-reserve the negative side.
    share = alpha[None, :, :] * omega[:, None, :]  # (n, G, T)
    viol_dn = share > rm[None, :, :]
    viol_up = -share > rp[None, :, :]
    gen_max = 0.0
    for gi, g in enumerate(case.generators):
        for t in range(T):
            pd = float(viol_dn[:, gi, t].mean())
            pu = float(viol_up[:, gi, t].mean())
            per[f"gen|{g.name}|{t + 1}|dn"] = pd
            per[f"gen|{g.name}|{t + 1}|up"] = pu
            gen_max = max(gen_max, pd, pu)

    caps = np.array([ln.capacity for ln in case.lines])

    def line_violations(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per (sample, line, hour) violation masks for both flow signs."""
        Mg = matrix[:, case.gen_bus_cols]
        Mw = matrix[:, case.wind_bus_cols] if len(case.wind_buses) else None
        up = np.zeros((n, len(case.lines), T), dtype=bool)
        dn = np.zeros_like(up)
        for t in range(T):
            inj = case.fixed_injection(t + 1).copy()
            np.add.at(inj, case.gen_bus_cols, solution.p[:, t])
            fbar = matrix @ inj  # (L,)
            a = Mg @ alpha[:, t]
            if Mw is not None:
                coef = Mw - a[:, None]  # (L, W)
                dev = samples[:, :, t] @ coef.T  # (n, L)
            else:
                dev = np.zeros((n, len(case.lines)))
            f = fbar[None, :] + dev
            up[:, :, t] = f > caps[None, :]
            dn[:, :, t] = f < -caps[None, :]
        return up, dn

    base = ptdf_cache.get(None)
    up, dn = line_violations(base.matrix)
    line_max = 0.0
    for li, ln in enumerate(case.lines):
        for t in range(T):
            pu = float(up[:, li, t].mean())
            pd = float(dn[:, li, t].mean())
            per[f"line|{ln.name}|{t + 1}|up"] = pu
            per[f"line|{ln.name}|{t + 1}|dn"] = pd
            line_max = max(line_max, pu, pd)

    # Any-violation counts mirror the normal-operation tally: outage rows
    # are reported per constraint but kept out of the hourly series.
    any_viol = viol_dn.any(axis=1) | viol_up.any(axis=1) | up.any(axis=1) | dn.any(axis=1)
    hourly = any_viol.sum(axis=0).astype(int).tolist()

    cont_max = 0.0
    for lc in case.line_contingencies:
        m_lc = ptdf_cache.get(lc)
        cup, cdn = line_violations(m_lc.matrix)
        lc_row = case.line_index[lc]
        for li, ln in enumerate(case.lines):
            if li == lc_row:
                continue
            for t in range(T):
                pu = float(cup[:, li, t].mean())
                pd = float(cdn[:, li, t].mean())
                per[f"line_cont|{ln.name}|{t + 1}|up|{lc}"] = pu
                per[f"line_cont|{ln.name}|{t + 1}|dn|{lc}"] = pd
                cont_max = max(cont_max, pu, pd)

    max_by_class = {"generator": gen_max, "line": line_max, "line_contingency": cont_max}
    designed = {
        "generator": chance.eps_gen,
        "line": chance.eps_line,
        "line_contingency": chance.eps_line_cont,
    }
    exceeds = {
        cls: max_by_class[cls] > designed[cls] + _binomial_band(designed[cls], n)
        for cls in max_by_class
    }
    return ValidationReport(
        case_name=case.name,
        case_fingerprint=case_fingerprint(case),
        solution_mode=solution.mode,
        distribution=distribution,
        shape=shape,
        samples=n,
        seed=seed,
        designed_eps=designed,
        per_constraint=per,
        max_by_class=max_by_class,
        exceeds_design=exceeds,
        hourly_any_violation=hourly,
    )


def validate_solution(
    solution: CommitmentSolution,
    case: GridCase,
    distribution: str,
    n: int,
    seed: int,
    shape: float = 2.0,
    chance: ChanceSpec | None = None,
    ptdf_cache: PtdfCache | None = None,
) -> ValidationReport:
    """Sample-and-evaluate convenience wrapper."""
    sampler = ScenarioSampler.from_case(case, distribution, seed, shape)
    samples = sample_deviations(sampler, n)
    return evaluate_solution(
        solution,
        case,
        ptdf_cache or PtdfCache(case),
        samples,
        chance=chance,
        distribution=distribution,
        shape=shape,
        seed=seed,
    )


@dataclass
class ComparisonReport:
    """Side-by-side costs and empirical behaviour of two solutions."""

    case_name: str
    rows: dict[str, tuple[float, float]]  # metric -> (first, second)
    first_label: str
    second_label: str
    hourly_any_violation: dict[str, list[int]]
    samples: int
    distribution: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "case_name": self.case_name,
            "first_label": self.first_label,
            "second_label": self.second_label,
            "rows": {k: [v[0], v[1]] for k, v in sorted(self.rows.items())},
            "hourly_any_violation": {
                k: list(v) for k, v in sorted(self.hourly_any_violation.items())
            },
            "samples": self.samples,
            "distribution": self.distribution,
            "seed": self.seed,
        }


def compare_solutions(
    first: CommitmentSolution,
    second: CommitmentSolution,
    case: GridCase,
    samples: np.ndarray,
    chance: ChanceSpec | None = None,
    ptdf_cache: PtdfCache | None = None,
    labels: tuple[str, str] = ("deterministic", "chance_constrained"),
    distribution: str = "normal",
    seed: int = 0,
) -> ComparisonReport:
    """Cost breakdown plus per-hour violation counts under shared samples."""
    if first.case_fingerprint != second.case_fingerprint:
        raise ValueError("solutions were produced from different cases")
    if first.case_fingerprint != case_fingerprint(case):
        raise ValueError("solutions do not match the provided case")
    ptdf_cache = ptdf_cache or PtdfCache(case)
    rep1 = evaluate_solution(first, case, ptdf_cache, samples, chance=chance,
                             distribution=distribution, seed=seed)
    rep2 = evaluate_solution(second, case, ptdf_cache, samples, chance=chance,
                             distribution=distribution, seed=seed)
    c1, c2 = first.total_costs(), second.total_costs()
    rows = {
        "total_cost": (first.objective, second.objective),
        "no_load_cost": (c1["no_load"], c2["no_load"]),
        "startup_cost": (c1["startup"], c2["startup"]),
        "production_cost": (c1["production"], c2["production"]),
        "tertiary_reserve_cost": (c1["tertiary_reserve"], c2["tertiary_reserve"]),
        "generation_reserve_cost": (c1["generation_reserve"], c2["generation_reserve"]),
        "optimality_gap": (first.gap, second.gap),
        "generation_reserves_mw": (
            first.total_generation_reserve_mw(),
            second.total_generation_reserve_mw(),
        ),
    }
    return ComparisonReport(
        case_name=case.name,
        rows=rows,
        first_label=labels[0],
        second_label=labels[1],
        hourly_any_violation={
            labels[0]: rep1.hourly_any_violation,
            labels[1]: rep2.hourly_any_violation,
        },
        samples=samples.shape[0],
        distribution=distribution,
        seed=seed,
    )
