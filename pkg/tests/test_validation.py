"""Scenario sampling, out-of-sample evaluation, solution comparison."""

import math

import numpy as np
import pytest

from sccuc.grid import PtdfCache
from sccuc.uncertainty import DomainError
from sccuc.validation import (
    ScenarioSampler,
    compare_solutions,
    evaluate_solution,
    sample_deviations,
    validate_solution,
)


class TestSampleDeviations:
    def test_zero_sigma_gives_zero_samples(self):
        sampler = ScenarioSampler("normal", np.zeros((2, 3)), seed=1)
        assert np.all(sample_deviations(sampler, 50) == 0.0)

    def test_same_seed_reproduces_samples(self):
        sigma = np.array([[5.0, 6.0]])
        a = sample_deviations(ScenarioSampler("laplace", sigma, seed=9), 100)
        b = sample_deviations(ScenarioSampler("laplace", sigma, seed=9), 100)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize(
        "distribution,shape",
        [("normal", 2.0), ("laplace", 2.0), ("logistic", 2.0), ("weibull", 2.0), ("weibull", 1.2)],
    )
    def test_moments_match_targets_within_two_percent(self, distribution, shape):
        sigma = np.array([[8.0], [12.5]])
        sampler = ScenarioSampler(distribution, sigma, seed=123, shape=shape)
        draws = sample_deviations(sampler, 10**5)
        std = draws.std(axis=0, ddof=1)
        np.testing.assert_allclose(std, sigma, rtol=0.02)
        mean_scale = np.abs(draws.mean(axis=0)) / sigma
        assert mean_scale.max() < 0.02

    def test_bad_weibull_shape_rejected(self):
        with pytest.raises(DomainError):
            ScenarioSampler("weibull", np.ones((1, 1)), seed=1, shape=0.0)

    def test_unknown_distribution_rejected(self):
        with pytest.raises(DomainError):
            ScenarioSampler("cauchy", np.ones((1, 1)), seed=1)

    def test_sample_count_must_be_positive(self):
        sampler = ScenarioSampler("normal", np.ones((1, 1)), seed=1)
        with pytest.raises(DomainError):
            sample_deviations(sampler, 0)


class TestEvaluateSolution:
    def test_zero_deviations_produce_zero_violations(self, calibration_solution):
        case, wind, chance, sol, _ = calibration_solution
        samples = np.zeros((10, len(case.wind_buses), case.horizon))
        report = evaluate_solution(sol, case, PtdfCache(case), samples, chance=chance)
        assert max(report.max_by_class.values()) == 0.0
        assert report.hourly_any_violation == [0]

    def test_dimension_mismatch_rejected(self, calibration_solution):
        case, _, chance, sol, _ = calibration_solution
        with pytest.raises(ValueError, match="shape"):
            evaluate_solution(sol, case, PtdfCache(case), np.zeros((5, 3, 9)), chance=chance)

    def test_active_line_constraint_calibrates(self, calibration_solution):
        case, wind, chance, sol, _ = calibration_solution
        n = 10**5
        report = validate_solution(sol, case, "normal", n, seed=5, chance=chance)
        line_probs = {
            k: v for k, v in report.per_constraint.items() if k.startswith("line|")
        }
        band = 3.0 * math.sqrt(0.1 * 0.9 / n)
        assert abs(max(line_probs.values()) - chance.eps_line) <= band

    def test_heavy_tailed_sampling_flags_exceedance(self, calibration_solution):
        case, wind, chance, sol, _ = calibration_solution
        report = validate_solution(sol, case, "weibull", 20000, seed=6, shape=1.2, chance=chance)
        assert report.exceeds_design["line"] or report.exceeds_design["generator"]

    def test_report_round_trip(self, calibration_solution):
        from sccuc.validation import ValidationReport

        case, wind, chance, sol, _ = calibration_solution
        report = validate_solution(sol, case, "normal", 500, seed=3, chance=chance)
        again = ValidationReport.from_dict(report.to_dict())
        assert again.to_dict() == report.to_dict()

    def test_determinism(self, calibration_solution):
        case, wind, chance, sol, _ = calibration_solution
        a = validate_solution(sol, case, "logistic", 1000, seed=11, chance=chance)
        b = validate_solution(sol, case, "logistic", 1000, seed=11, chance=chance)
        assert a.to_dict() == b.to_dict()


class TestCompareSolutions:
    def test_identical_solutions_give_identical_columns(self, calibration_solution):
        case, wind, chance, sol, _ = calibration_solution
        samples = sample_deviations(ScenarioSampler.from_case(case, "normal", 2), 200)
        report = compare_solutions(sol, sol, case, samples, chance=chance,
                                   labels=("a", "b"))
        for a, b in report.rows.values():
            assert a == b
        assert report.hourly_any_violation["a"] == report.hourly_any_violation["b"]

    def test_cost_rows_match_solution_totals(self, stressed_pair):
        case, wind, chance, det, cc, _ = stressed_pair
        samples = sample_deviations(ScenarioSampler.from_case(case, "logistic", 3), 100)
        report = compare_solutions(det, cc, case, samples, chance=chance)
        det_costs = det.total_costs()
        assert report.rows["no_load_cost"][0] == pytest.approx(det_costs["no_load"])
        assert report.rows["total_cost"][1] == pytest.approx(cc.objective)
        # components add up to the totals in both columns
        for col, sol in ((0, det), (1, cc)):
            parts = sum(
                report.rows[key][col]
                for key in ("no_load_cost", "startup_cost", "production_cost",
                            "tertiary_reserve_cost", "generation_reserve_cost")
            )
            assert parts == pytest.approx(report.rows["total_cost"][col], abs=1e-6)

    def test_mismatched_cases_rejected(self, calibration_solution, stressed_pair):
        case, wind, chance, sol, _ = calibration_solution
        other_case, _, _, det, _, _ = stressed_pair
        samples = np.zeros((5, len(case.wind_buses), case.horizon))
        with pytest.raises(ValueError, match="different cases"):
            compare_solutions(sol, det, case, samples, chance=chance)
