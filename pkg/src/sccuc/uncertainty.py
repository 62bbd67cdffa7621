"""Wind deviation model and chance-constraint algebra.

Gaussian per-bus deviations are zero mean and independent across buses and
hours; forecast wind enters only through the power balance.  A one-sided
probabilistic limit on an affine function of the deviations reformulates
analytically into a second-order cone constraint; the per-generator reserve
limits collapse further into plain linear rows.  Cone constraints are never
handed to a solver directly: they are enforced by accumulating linear
supporting-hyperplane (outer approximation) cuts at violating points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

SOC_FEASIBILITY_TOL_MW = 1e-6
_DEGENERATE_CONE_STEP = 1e-8

VarKey = Hashable


class DomainError(ValueError):
    """Raised for arguments outside an operation's mathematical domain."""


def inverse_normal_cdf(p: float) -> float:
    """Quantile of the standard normal distribution, 0 < p < 1."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return float(ndtri(p))


@dataclass(frozen=True)
class WindModel:
    """Per-bus, per-hour deviation standard deviations (MW).

    ``sigma`` has shape (wind buses, horizon); deviations are zero mean and
    independent, so the total-deviation std is the root sum of squares.
    """

    buses: tuple[str, ...]
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape[0] != len(self.buses):
            raise ValueError("sigma must have one row per wind bus")
        if (sigma < 0).any():
            raise ValueError("deviation std must be non-negative")
        object.__setattr__(self, "sigma", sigma)
        self.sigma.setflags(write=False)

    @classmethod
    def from_case(cls, case) -> "WindModel":
        return cls(buses=case.wind_buses, sigma=case.wind_std_matrix.copy())

    def sigma_total(self, t: int) -> float:
        """Std of the summed deviation across wind buses at hour t (1-based)."""
        if self.sigma.size == 0:
            return 0.0
        return float(np.sqrt((self.sigma[:, t - 1] ** 2).sum()))


@dataclass(frozen=True)
class ChanceSpec:
    """Violation probabilities per constraint class.

    Each epsilon must lie in (0, 0.5) so the normal quantile is positive and
    the reformulated constraint is convex; ``validate`` enforces this.  The
    boundary value 0.5 (zero margin) is tolerated by the row builders for
    degenerate experiments but rejected here.
    """

    eps_gen: float = 0.01
    eps_line: float = 0.10
    eps_line_cont: float = 0.20

    def validate(self) -> None:
        for label, eps in (
            ("eps_gen", self.eps_gen),
            ("eps_line", self.eps_line),
            ("eps_line_cont", self.eps_line_cont),
        ):
            if not 0.0 < eps < 0.5:
                raise DomainError(f"{label} must lie in (0, 0.5), got {eps}")


@dataclass(frozen=True)
class LinearCut:
    """A linear row over named decision variables: coeffs . vars <= rhs."""

    vars: tuple[VarKey, ...]
    coeffs: tuple[float, ...]
    rhs: float
    label: tuple = ()

    def evaluate(self, point: Mapping[VarKey, float]) -> float:
        """Left-hand side minus rhs; <= 0 means satisfied."""
        return sum(c * point[v] for v, c in zip(self.vars, self.coeffs)) - self.rhs


def reserve_cc_linear(
    alpha_var: VarKey,
    reserve_var: VarKey,
    epsilon: float,
    sigma_omega: float,
    label: tuple = (),
) -> LinearCut:
    """Linear form of the reserve adequacy chance constraint.

    The held reserve must cover the responding share of the total deviation
    with probability 1 - epsilon; for a zero-mean Gaussian total deviation
    this is exactly  quantile(1-eps) * sigma * alpha <= reserve.
    """
    if not 0.0 < epsilon <= 0.5:
        raise DomainError(f"epsilon must lie in (0, 0.5], got {epsilon}")
    if sigma_omega < 0:
        raise DomainError("sigma_omega must be >= 0")
    z = inverse_normal_cdf(1.0 - epsilon)
    return LinearCut(
        vars=(alpha_var, reserve_var),
        coeffs=(z * sigma_omega, -1.0),
        rhs=0.0,
        label=label,
    )


@dataclass(frozen=True)
class SocConstraint:
    """affine(v) + z * ||A v + c|| <= bound, convex for z > 0.

    ``conic_matrix`` has one row per wind bus: row b holds the sensitivity
    of bus b's deviation impact to the participation variables, and
    ``conic_offset`` its fixed shift-factor part.  The label identifies
    (family, line, hour, outage or None, sign).
    """

    affine_vars: tuple[VarKey, ...]
    affine_coeffs: tuple[float, ...]
    affine_const: float
    conic_vars: tuple[VarKey, ...]
    conic_matrix: np.ndarray
    conic_offset: np.ndarray
    z: float
    bound: float
    label: tuple = ()

    def __post_init__(self):
        if self.z <= 0:
            raise DomainError("quantile factor must be positive")
        A = np.asarray(self.conic_matrix, dtype=float)
        c = np.asarray(self.conic_offset, dtype=float)
        if A.shape != (c.shape[0], len(self.conic_vars)):
            raise ValueError("conic matrix shape must be (wind buses, conic vars)")
        object.__setattr__(self, "conic_matrix", A)
        object.__setattr__(self, "conic_offset", c)
        A.setflags(write=False)
        c.setflags(write=False)

    def _parts(self, point: Mapping[VarKey, float]) -> tuple[float, np.ndarray]:
        affine = self.affine_const + sum(
            coef * point[v] for v, coef in zip(self.affine_vars, self.affine_coeffs)
        )
        v = np.array([point[k] for k in self.conic_vars], dtype=float)
        u = self.conic_matrix @ v + self.conic_offset if len(self.conic_vars) else self.conic_offset
        return affine, u

    def margin(self, point: Mapping[VarKey, float]) -> float:
        _, u = self._parts(point)
        return self.z * float(np.linalg.norm(u))

    def residual(self, point: Mapping[VarKey, float]) -> float:
        affine, u = self._parts(point)
        return affine + self.z * float(np.linalg.norm(u)) - self.bound


def check_chance_constraint(soc: SocConstraint, point: Mapping[VarKey, float]) -> float:
    """Constraint residual at the point (MW); <= 0 means satisfied."""
    return soc.residual(point)


def flow_soc(
    m_row: np.ndarray,
    gen_bus_cols: Sequence[int],
    wind_bus_cols: Sequence[int],
    sigma: np.ndarray,
    epsilon: float,
    fmax: float,
    sign: int,
    p_vars: Sequence[VarKey],
    alpha_vars: Sequence[VarKey],
    fixed_injection: np.ndarray,
    label: tuple = (),
) -> SocConstraint:
    """Probabilistic line-flow limit as a cone constraint over (p, alpha).

    The random flow is the deterministic flow at forecast plus, per wind
    bus b, (m_row[b] - sum_i m_row[bus(i)] alpha_i) times bus b's deviation;
    requiring sign * flow <= fmax with probability 1 - epsilon yields

        sign * flow_at_forecast + q(1-eps) * ||diag(sigma) (m_w - M_g alpha)|| <= fmax

    which is affine in p inside the mean term and affine in alpha inside
    the norm.  ``sign`` is +1 for the upper limit and -1 for the lower one.
    """
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if sign not in (+1, -1):
        raise DomainError("sign must be +1 or -1")
    m_row = np.asarray(m_row, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = inverse_normal_cdf(1.0 - epsilon)
    gen_factors = m_row[np.asarray(gen_bus_cols, dtype=int)] if len(gen_bus_cols) else np.zeros(0)
    wind_factors = m_row[np.asarray(wind_bus_cols, dtype=int)] if len(wind_bus_cols) else np.zeros(0)
    # One conic row per wind bus: sigma_b * (m_row[b] - sum_i m_row[bus(i)] alpha_i).
    A = -np.outer(sigma, gen_factors)
    c = sigma * wind_factors
    return SocConstraint(
        affine_vars=tuple(p_vars),
        affine_coeffs=tuple(float(sign) * gen_factors),
        affine_const=float(sign) * float(m_row @ np.asarray(fixed_injection, dtype=float)),
        conic_vars=tuple(alpha_vars),
        conic_matrix=A,
        conic_offset=c,
        z=z,
        bound=float(fmax),
        label=label,
    )


def oa_cut(
    soc: SocConstraint,
    point: Mapping[VarKey, float],
    tol: float = SOC_FEASIBILITY_TOL_MW,
) -> LinearCut | None:
    """Supporting-hyperplane cut for a violated cone constraint.

    Returns None when the constraint already holds at the point within
    ``tol``.  Otherwise the norm term is linearized at the point, giving a
    row that every cone-feasible assignment satisfies while the violating
    point breaches it by exactly the cone residual.
    """
    affine, u = soc._parts(point)
    norm_u = float(np.linalg.norm(u))
    if affine + soc.z * norm_u - soc.bound <= tol:
        return None
    A, c = soc.conic_matrix, soc.conic_offset
    if norm_u == 0.0:
        if A.size and float(np.abs(A).max()) > 0.0:
            # Degenerate linearization point: nudge along the coefficient row
            # of the widest wind bus to recover a well-defined gradient.
            widest = int(np.argmax(np.linalg.norm(A, axis=1)))
            direction = A[widest]
            v = np.array([point[k] for k in soc.conic_vars], dtype=float)
            v = v + _DEGENERATE_CONE_STEP * direction / np.linalg.norm(direction)
            u = A @ v + c
            norm_u = float(np.linalg.norm(u))
        else:
            # The norm term is constant: the constraint is already linear.
            const_norm = float(np.linalg.norm(c)) if c.size else 0.0
            return LinearCut(
                vars=tuple(soc.affine_vars),
                coeffs=tuple(soc.affine_coeffs),
                rhs=soc.bound - soc.affine_const - soc.z * const_norm,
                label=soc.label + ("oa",),
            )
    g = u / norm_u
    conic_coeffs = soc.z * (g @ A)
    rhs = soc.bound - soc.affine_const - soc.z * float(g @ c)
    merged: dict[VarKey, float] = {}
    for v, coef in zip(soc.affine_vars, soc.affine_coeffs):
        merged[v] = merged.get(v, 0.0) + coef
    for v, coef in zip(soc.conic_vars, conic_coeffs):
        merged[v] = merged.get(v, 0.0) + float(coef)
    keys = tuple(merged)
    return LinearCut(
        vars=keys,
        coeffs=tuple(merged[k] for k in keys),
        rhs=rhs,
        label=soc.label + ("oa",),
    )
