import pytest

from sccuc.benders import SolveOptions, solve_sccuc
from sccuc.cases import calibration_case, ring3_case, stressed_case
from sccuc.uncertainty import ChanceSpec, WindModel


@pytest.fixture(scope="session")
def ring3():
    return ring3_case()


@pytest.fixture(scope="session")
def exact_options():
    return SolveOptions(benders_gap=1e-6, mip_gap=0.0)


@pytest.fixture(scope="session")
def calibration_solution(exact_options):
    """Solved calibration case: the L23 upper flow limit binds at optimum."""
    case = calibration_case()
    wind = WindModel.from_case(case)
    chance = ChanceSpec()
    solution, state = solve_sccuc(case, wind, chance, exact_options)
    return case, wind, chance, solution, state


@pytest.fixture(scope="session")
def stressed_pair():
    """Deterministic and chance-constrained solutions on the stressed case."""
    from sccuc.formulation import build_deterministic, extract_solution
    from sccuc.solver import get_backend

    case = stressed_case()
    wind = WindModel.from_case(case)
    chance = ChanceSpec()
    cc, state = solve_sccuc(case, wind, chance, SolveOptions())
    model = build_deterministic(case, 0.005)
    outcome = get_backend().solve_milp(model.to_problem(mip_gap=0.01))
    det = extract_solution(model, outcome, case)
    return case, wind, chance, det, cc, state
