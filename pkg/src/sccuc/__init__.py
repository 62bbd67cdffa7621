"""N-1 secure, chance-constrained unit commitment toolkit."""

from .grid import (
    GridCase,
    SensitivityMatrix,
    build_ptdf,
    dc_flows,
    load_case,
    outage_ptdf,
    save_case,
    validate_case,
)
from .uncertainty import ChanceSpec, SocConstraint, WindModel, inverse_normal_cdf
from .formulation import (
    CommitmentSolution,
    build_deterministic,
    build_extensive_form,
    build_master,
    extract_solution,
)
from .benders import BendersState, SolveOptions, solve_sccuc
from .validation import ScenarioSampler, ValidationReport, evaluate_solution, sample_deviations

__version__ = "0.1.0"
