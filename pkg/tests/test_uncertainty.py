"""Chance-constraint algebra: quantiles, reformulations, cone cuts."""

import math

import numpy as np
import pytest
from helpers import normal_quantile_by_bisection

from sccuc.cases import ring3_case
from sccuc.grid import build_ptdf
from sccuc.uncertainty import (
    ChanceSpec,
    DomainError,
    SocConstraint,
    check_chance_constraint,
    flow_soc,
    inverse_normal_cdf,
    oa_cut,
    reserve_cc_linear,
)


class TestInverseNormalCdf:
    def test_median_is_zero(self):
        assert inverse_normal_cdf(0.5) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("p", [0.9, 0.99, 0.8, 0.2, 0.3, 0.975, 1e-4, 1 - 1e-4])
    def test_matches_bisection_oracle(self, p):
        z = inverse_normal_cdf(p)
        assert z == pytest.approx(normal_quantile_by_bisection(p), abs=1e-9)
        # round-trip accuracy of the quantile itself
        phi = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
        assert abs(phi - p) <= 1e-10

    def test_known_values(self):
        assert inverse_normal_cdf(0.9) == pytest.approx(1.2815515655, abs=1e-9)
        assert inverse_normal_cdf(0.99) == pytest.approx(2.3263478740, abs=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
    def test_domain_errors(self, p):
        with pytest.raises(DomainError):
            inverse_normal_cdf(p)


class TestChanceSpec:
    def test_defaults_are_valid(self):
        ChanceSpec().validate()

    @pytest.mark.parametrize("eps", [0.0, 0.5, 0.7])
    def test_out_of_range_rejected(self, eps):
        with pytest.raises(DomainError):
            ChanceSpec(eps_gen=eps).validate()


class TestWindModel:
    def test_total_deviation_std_is_root_sum_of_squares(self):
        from sccuc.uncertainty import WindModel

        model = WindModel(buses=("a", "b"), sigma=np.array([[3.0], [4.0]]))
        assert model.sigma_total(1) == pytest.approx(5.0)

    def test_negative_sigma_rejected(self):
        from sccuc.uncertainty import WindModel

        with pytest.raises(ValueError, match="non-negative"):
            WindModel(buses=("a",), sigma=np.array([[-1.0]]))

    def test_shape_mismatch_rejected(self):
        from sccuc.uncertainty import WindModel

        with pytest.raises(ValueError, match="row per wind bus"):
            WindModel(buses=("a", "b"), sigma=np.array([[1.0]]))


class TestReserveCcLinear:
    def test_zero_sigma_reduces_to_nonnegativity(self):
        row = reserve_cc_linear(("alpha",), ("rm",), 0.1, 0.0)
        assert row.coeffs == (0.0, -1.0)
        assert row.evaluate({("alpha",): 1.0, ("rm",): 0.0}) == 0.0

    def test_half_epsilon_zeroes_alpha_coefficient(self):
        row = reserve_cc_linear(("alpha",), ("rm",), 0.5, 25.0)
        assert row.coeffs[0] == pytest.approx(0.0, abs=1e-12)

    def test_required_reserve_at_one_percent(self):
        # 2.3263478740 * 100 * 0.2 from the quantile oracle
        row = reserve_cc_linear(("alpha",), ("rm",), 0.01, 100.0)
        needed = row.coeffs[0] * 0.2
        assert needed == pytest.approx(46.526957480, abs=1e-6)
        assert row.evaluate({("alpha",): 0.2, ("rm",): 46.4}) > 0
        assert row.evaluate({("alpha",): 0.2, ("rm",): 46.6}) < 0

    def test_matches_general_reformulation_coefficientwise(self):
        # The scalar total-deviation case of the cone form must agree with
        # the linear specialization coefficient by coefficient.
        sigma_total = 37.0
        eps = 0.07
        row = reserve_cc_linear(("alpha",), ("rm",), eps, sigma_total)
        soc = SocConstraint(
            affine_vars=(("rm",),),
            affine_coeffs=(-1.0,),
            affine_const=0.0,
            conic_vars=(("alpha",),),
            conic_matrix=np.array([[sigma_total]]),
            conic_offset=np.array([0.0]),
            z=inverse_normal_cdf(1 - eps),
            bound=0.0,
        )
        for alpha, rm in [(0.0, 0.0), (0.3, 10.0), (1.0, 80.0), (0.5, 44.0)]:
            point = {("alpha",): alpha, ("rm",): rm}
            assert row.evaluate(point) == pytest.approx(soc.residual(point), abs=1e-9)


def _ring_soc(sign=+1, eps=0.1, sigma=10.0, line="L13", fmax=100.0):
    """Cone constraint for the canonical ring: wind at bus 1, unit at bus 3."""
    case = ring3_case(wind_sigma=(sigma,))
    M = build_ptdf(case)
    li = case.line_index[line]
    return case, flow_soc(
        m_row=M.matrix[li],
        gen_bus_cols=[case.bus_index["b3"]],
        wind_bus_cols=[case.bus_index["b1"]],
        sigma=np.array([sigma]),
        epsilon=eps,
        fmax=fmax,
        sign=sign,
        p_vars=[("p", "G", 1)],
        alpha_vars=[("alpha", "G", 1)],
        fixed_injection=np.zeros(3),
    )


class TestFlowSoc:
    def test_zero_sigma_degenerates_to_deterministic_limit(self):
        case, soc = _ring_soc(sigma=0.0, fmax=50.0)
        point = {("p", "G", 1): 30.0, ("alpha", "G", 1): 1.0}
        # margin vanishes; residual is the flow against the limit
        assert soc.margin(point) == 0.0

    def test_single_wind_bus_margin(self):
        # factor of L13 for bus 1 is 2/3; the unit at the reference bus has
        # factor 0, so the margin is q(0.9) * 10 * 2/3 = 8.5437...
        case, soc = _ring_soc()
        point = {("p", "G", 1): 0.0, ("alpha", "G", 1): 1.0}
        expected = 1.2815515655 * 10.0 * (2.0 / 3.0)
        assert soc.margin(point) == pytest.approx(expected, abs=1e-6)
        assert soc.margin(point) == pytest.approx(8.543677, abs=1e-4)

    def test_margin_scales_with_alpha_distance(self):
        case, soc = _ring_soc()
        z = inverse_normal_cdf(0.9)
        for alpha in (0.0, 0.4, 1.0):
            point = {("p", "G", 1): 0.0, ("alpha", "G", 1): alpha}
            assert soc.margin(point) == pytest.approx(z * 10.0 * abs(2.0 / 3.0 - 0.0), abs=1e-9)

    def test_epsilon_domain(self):
        with pytest.raises(DomainError):
            _ring_soc(eps=0.5)


class TestCheckChanceConstraint:
    def test_satisfied_constraint_has_negative_residual(self):
        case, soc = _ring_soc(fmax=100.0)
        assert check_chance_constraint(soc, {("p", "G", 1): 10.0, ("alpha", "G", 1): 1.0}) < 0

    def test_boundary_point_is_zero(self):
        case, soc = _ring_soc(fmax=100.0)
        margin = soc.margin({("p", "G", 1): 0.0, ("alpha", "G", 1): 1.0})
        # flow factor of the unit at the reference bus is zero, so only the
        # margin counts; put the flow exactly at the remaining headroom
        point = {("p", "G", 1): 0.0, ("alpha", "G", 1): 1.0}
        shifted = SocConstraint(
            affine_vars=soc.affine_vars,
            affine_coeffs=soc.affine_coeffs,
            affine_const=100.0 - margin,
            conic_vars=soc.conic_vars,
            conic_matrix=soc.conic_matrix,
            conic_offset=soc.conic_offset,
            z=soc.z,
            bound=soc.bound,
        )
        assert check_chance_constraint(shifted, point) == pytest.approx(0.0, abs=1e-9)

    def test_degenerate_cone_residual_equals_deterministic_slack(self):
        case, soc = _ring_soc(sigma=0.0, fmax=50.0)
        point = {("p", "G", 1): 30.0, ("alpha", "G", 1): 1.0}
        assert check_chance_constraint(soc, point) == pytest.approx(
            0.0 * 30.0 - 50.0, abs=1e-12
        )


class TestOaCut:
    def _violated_soc(self):
        # ||v|| <= 1 style cone in two variables with a tight bound
        return SocConstraint(
            affine_vars=(("a",),),
            affine_coeffs=(1.0,),
            affine_const=0.0,
            conic_vars=(("u",), ("v",)),
            conic_matrix=np.array([[1.0, 0.0], [0.0, 1.0]]),
            conic_offset=np.zeros(2),
            z=2.0,
            bound=4.0,
        )

    def test_interior_point_returns_none(self):
        soc = self._violated_soc()
        assert oa_cut(soc, {("a",): 0.0, ("u",): 0.5, ("v",): 0.5}) is None

    def test_tangency_at_linearization_point(self):
        soc = self._violated_soc()
        point = {("a",): 1.0, ("u",): 2.0, ("v",): 1.0}
        residual = soc.residual(point)
        assert residual > 0
        cut = oa_cut(soc, point)
        assert cut.evaluate(point) == pytest.approx(residual, abs=1e-9)

    def test_cut_valid_for_thousand_feasible_samples(self):
        soc = self._violated_soc()
        cut = oa_cut(soc, {("a",): 1.0, ("u",): 2.0, ("v",): 1.0})
        rng = np.random.default_rng(11)
        kept = 0
        while kept < 1000:
            a, u, v = rng.uniform(-3, 3, 3)
            point = {("a",): a, ("u",): u, ("v",): v}
            if soc.residual(point) <= 0:
                kept += 1
                assert cut.evaluate(point) <= 1e-9
        assert kept == 1000

    def test_degenerate_cone_perturbation(self):
        soc = SocConstraint(
            affine_vars=(("a",),),
            affine_coeffs=(1.0,),
            affine_const=0.0,
            conic_vars=(("u",),),
            conic_matrix=np.array([[3.0]]),
            conic_offset=np.array([0.0]),
            z=1.0,
            bound=1.0,
        )
        cut = oa_cut(soc, {("a",): 2.0, ("u",): 0.0})
        assert cut is not None
        # the affine violation survives the cut
        assert cut.evaluate({("a",): 2.0, ("u",): 0.0}) > 0

    def test_constant_cone_becomes_linear_row(self):
        soc = SocConstraint(
            affine_vars=(("a",),),
            affine_coeffs=(1.0,),
            affine_const=0.0,
            conic_vars=(),
            conic_matrix=np.zeros((1, 0)),
            conic_offset=np.array([2.0]),
            z=1.0,
            bound=3.0,
        )
        cut = oa_cut(soc, {("a",): 5.0})
        assert cut.rhs == pytest.approx(1.0)  # bound minus constant margin


class TestReformulationSoundness:
    def test_boundary_constraint_calibrates_under_normal_sampling(self):
        # A cone constraint holding with equality must be violated with
        # frequency epsilon under the modelled Gaussian deviations.
        eps = 0.1
        sigma = np.array([6.0, 8.0])
        z = inverse_normal_cdf(1 - eps)
        coefs = np.array([0.7, -0.4])  # deviation impact per wind bus
        margin = z * math.sqrt(((coefs * sigma) ** 2).sum())
        rng = np.random.default_rng(3)
        n = 10**5
        omega = rng.standard_normal((n, 2)) * sigma
        freq = float(((omega @ coefs) > margin).mean())
        band = 3.0 * math.sqrt(eps * (1 - eps) / n)
        assert abs(freq - eps) <= band


class TestOaCompleteness:
    def test_loop_terminates_on_pure_cone_feasibility_problem(self):
        # maximize u + v over {0.5 u + 2||(u, v)|| <= 4} with box bounds;
        # the optimum sits on the cone boundary, so the loop must keep
        # cutting until the residual clears the feasibility tolerance.
        from sccuc.solver import LinearProblem, solve_lp

        soc = SocConstraint(
            affine_vars=(("u",),),
            affine_coeffs=(0.5,),
            affine_const=0.0,
            conic_vars=(("u",), ("v",)),
            conic_matrix=np.eye(2),
            conic_offset=np.zeros(2),
            z=2.0,
            bound=4.0,
        )
        cols = {("u",): 0, ("v",): 1}
        rows: list[tuple[list[int], list[float], str, float]] = []
        point = None
        for _ in range(80):
            A = np.zeros((max(len(rows), 1), 2))
            senses, rhs = [], []
            for j, (cc, vv, s, b) in enumerate(rows):
                A[j, cc] = vv
                senses.append(s)
                rhs.append(b)
            if not rows:  # placeholder row so the problem is well-formed
                senses, rhs = ["<"], [100.0]
            problem = LinearProblem(
                c=np.array([-1.0, -1.0]),
                A=A,
                senses=np.array(senses),
                rhs=np.array(rhs),
                lb=np.array([-10.0, -10.0]),
                ub=np.array([10.0, 10.0]),
            )
            out = solve_lp(problem)
            point = {k: out.x[i] for k, i in cols.items()}
            cut = oa_cut(soc, point)
            if cut is None:
                break
            rows.append(([cols[v] for v in cut.vars], list(cut.coeffs), "<", cut.rhs))
        else:
            pytest.fail("outer approximation did not converge")
        assert soc.residual(point) <= 1e-6
