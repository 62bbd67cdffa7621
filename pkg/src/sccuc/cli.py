"""Command-line front end: case ingestion, run orchestration, reports.

Exit codes: 0 solved within gap / reports written, 1 malformed input or
mismatched files, 2 problem infeasible, 3 iteration or solver limit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import benders, cases, reports
from .formulation import (
    build_deterministic,
    build_extensive_form,
    case_fingerprint,
    extract_solution,
)
from .grid import CaseError, GridCase, PtdfCache, load_case, save_case
from .solver import STATUS_INFEASIBLE, STATUS_LIMIT, DEFAULT_MIP_GAP, get_backend
from .uncertainty import ChanceSpec, DomainError, WindModel
from .validation import ScenarioSampler, compare_solutions, sample_deviations, validate_solution

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3

MODES = ("cc", "deterministic", "extensive-oracle")


@dataclass
class RunConfig:
    case_path: str
    mode: str = "cc"
    eps_gen: float = 0.01
    eps_line: float = 0.10
    eps_line_cont: float = 0.20
    benders_gap: float = 0.01
    mip_gap: float = DEFAULT_MIP_GAP
    oa_tol: float = 1e-6
    max_inner: int = 200
    max_outer: int = 25
    reserve_fraction: float = 0.005
    dist: tuple[str, ...] = ("normal",)
    samples: int = 1000
    seed: int = 1
    weibull_shape: float = 2.0
    threads: int = 1
    out: str = "out"

    def chance(self) -> ChanceSpec:
        spec = ChanceSpec(self.eps_gen, self.eps_line, self.eps_line_cont)
        spec.validate()
        return spec

    def solve_options(self) -> benders.SolveOptions:
        return benders.SolveOptions(
            benders_gap=self.benders_gap,
            mip_gap=self.mip_gap,
            oa_tol=self.oa_tol,
            max_inner=self.max_inner,
            max_outer=self.max_outer,
            threads=self.threads,
        )


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="case JSON file")
    p.add_argument("--eps-gen", type=float, default=0.01,
                   help="generator reserve violation probability (default 0.01)")
    p.add_argument("--eps-line", type=float, default=0.10,
                   help="base-case line violation probability (default 0.10)")
    p.add_argument("--eps-line-cont", type=float, default=0.20,
                   help="post-outage line violation probability (default 0.20)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--dist", action="append", choices=["normal", "laplace", "logistic", "weibull"],
                   help="sampling distribution; repeat for several (default: normal)")
    p.add_argument("--weibull-shape", type=float, default=2.0)
    p.add_argument("--threads", type=int, default=1)


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        case_path=args.case,
        mode=getattr(args, "mode", "cc"),
        eps_gen=args.eps_gen,
        eps_line=args.eps_line,
        eps_line_cont=args.eps_line_cont,
        benders_gap=getattr(args, "benders_gap", 0.01),
        mip_gap=getattr(args, "mip_gap", DEFAULT_MIP_GAP),
        oa_tol=getattr(args, "oa_tol", 1e-6),
        max_inner=getattr(args, "max_inner", 200),
        max_outer=getattr(args, "max_outer", 25),
        reserve_fraction=getattr(args, "reserve_fraction", 0.005),
        dist=tuple(args.dist) if args.dist else ("normal",),
        samples=args.samples,
        seed=args.seed,
        weibull_shape=args.weibull_shape,
        threads=args.threads,
        out=args.out,
    )


def _load_case_or_fail(path: str) -> GridCase:
    try:
        return load_case(path)
    except FileNotFoundError:
        print(f"case file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_INPUT)
    except (CaseError, json.JSONDecodeError) as exc:
        print(f"malformed case: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_INPUT)


def _setup_run_log(outdir: Path) -> None:
    root = logging.getLogger("sccuc")
    for handler in [h for h in root.handlers if isinstance(h, logging.FileHandler)]:
        root.removeHandler(handler)
        handler.close()
    handler = logging.FileHandler(outdir / "solve.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root.setLevel(logging.INFO)
    root.addHandler(handler)


def _solve_oa_monolith(model, config: RunConfig):
    """Sequential outer approximation on a monolithic model."""
    backend = get_backend()
    state = benders.BendersState()
    options = config.solve_options()
    outcome, _ = benders._solve_master_with_oa(model, state, options, backend)
    return outcome


def cmd_solve(config: RunConfig) -> int:
    case = _load_case_or_fail(config.case_path)
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _setup_run_log(outdir)
    try:
        chance = config.chance()
    except DomainError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    records: list[dict] = []
    try:
        if config.mode == "cc":
            solution, state = benders.solve_sccuc(
                case, WindModel.from_case(case), chance, config.solve_options()
            )
            records = state.log
        elif config.mode == "deterministic":
            model = build_deterministic(case, config.reserve_fraction)
            outcome = get_backend().solve_milp(model.to_problem(mip_gap=config.mip_gap))
            if outcome.status == STATUS_INFEASIBLE:
                raise benders.ProblemInfeasibleError("deterministic model is infeasible")
            if outcome.status == STATUS_LIMIT:
                raise benders.IterationLimitError("deterministic solve hit a limit")
            solution = extract_solution(model, outcome, case)
        elif config.mode == "extensive-oracle":
            model = build_extensive_form(case, WindModel.from_case(case), chance)
            outcome = _solve_oa_monolith(model, config)
            solution = extract_solution(model, outcome, case)
        else:
            print(f"unknown mode {config.mode!r}", file=sys.stderr)
            return EXIT_BAD_INPUT
    except benders.ProblemInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except benders.IterationLimitError as exc:
        print(f"limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT

    reports.write_solution(solution, outdir / "solution.json")
    reports.write_schedule_csv(solution, outdir / "schedule.csv")
    reports.write_costs_csv(solution, outdir / "costs.csv")
    reports.write_iteration_log(records, outdir / "iterations.jsonl")
    reports.render_bounds_figure(records, outdir / "bounds.png")
    print(
        f"solved {case.name} [{config.mode}]: objective {solution.objective:.2f} "
        f"(gap {solution.gap:.4f}); artifacts in {outdir}"
    )
    return EXIT_OK


def cmd_validate(config: RunConfig, solution_path: str) -> int:
    case = _load_case_or_fail(config.case_path)
    try:
        solution = reports.load_solution(Path(solution_path))
    except FileNotFoundError:
        print(f"solution file not found: {solution_path}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # malformed JSON or schema violation
        print(f"malformed solution: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if solution.case_fingerprint != case_fingerprint(case):
        print("solution was not produced from this case", file=sys.stderr)
        return EXIT_BAD_INPUT
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    chance = config.chance()
    ptdf_cache = PtdfCache(case)
    written: list[Path] = []
    for dist in config.dist:
        report = validate_solution(
            solution, case, dist, config.samples, config.seed,
            shape=config.weibull_shape, chance=chance, ptdf_cache=ptdf_cache,
        )
        stem = outdir / f"report_{dist}"
        written += reports.write_validation_report(report, stem)
    print(f"validated {solution.mode} solution on {case.name}: wrote {len(written)} files to {outdir}")
    return EXIT_OK


def cmd_compare(config: RunConfig, det_path: str, cc_path: str) -> int:
    case = _load_case_or_fail(config.case_path)
    try:
        det = reports.load_solution(Path(det_path))
        cc = reports.load_solution(Path(cc_path))
    except FileNotFoundError as exc:
        print(f"solution file not found: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:
        print(f"malformed solution: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    fp = case_fingerprint(case)
    if det.case_fingerprint != fp or cc.case_fingerprint != fp:
        print("solutions do not both match the given case", file=sys.stderr)
        return EXIT_BAD_INPUT
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dist = config.dist[0]
    sampler = ScenarioSampler.from_case(case, dist, config.seed, config.weibull_shape)
    samples = sample_deviations(sampler, config.samples)
    report = compare_solutions(
        det, cc, case, samples,
        chance=config.chance(),
        labels=(det.mode, cc.mode if cc.mode != det.mode else cc.mode + "_2"),
        distribution=dist,
        seed=config.seed,
    )
    written = reports.write_comparison_report(report, outdir)
    print(f"compared solutions on {case.name}: wrote {len(written)} files to {outdir}")
    return EXIT_OK


def cmd_example_case(name: str, path: str) -> int:
    try:
        case = cases.EXAMPLE_CASES[name]()
    except KeyError:
        print(f"unknown example {name!r}; choose from {sorted(cases.EXAMPLE_CASES)}", file=sys.stderr)
        return EXIT_BAD_INPUT
    save_case(case, path)
    print(f"wrote example case {name!r} to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sccuc",
        description="N-1 secure, chance-constrained unit commitment toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a case and write solution artifacts")
    _add_common_flags(p_solve)
    p_solve.add_argument("--mode", choices=MODES, default="cc")
    p_solve.add_argument("--benders-gap", type=float, default=0.01)
    p_solve.add_argument("--mip-gap", type=float, default=DEFAULT_MIP_GAP)
    p_solve.add_argument("--oa-tol", type=float, default=1e-6)
    p_solve.add_argument("--max-inner", type=int, default=200)
    p_solve.add_argument("--max-outer", type=int, default=25)
    p_solve.add_argument("--reserve-fraction", type=float, default=0.005,
                         help="nominal reserve rule for deterministic mode (default 0.005)")

    p_val = sub.add_parser("validate", help="Monte Carlo out-of-sample evaluation")
    _add_common_flags(p_val)
    p_val.add_argument("--solution", required=True, help="solution JSON from solve")

    p_cmp = sub.add_parser("compare", help="deterministic vs chance-constrained comparison")
    _add_common_flags(p_cmp)
    p_cmp.add_argument("--det", required=True, help="deterministic solution JSON")
    p_cmp.add_argument("--cc", required=True, help="chance-constrained solution JSON")

    p_ex = sub.add_parser("example-case", help="write a bundled example case file")
    p_ex.add_argument("name", choices=sorted(cases.EXAMPLE_CASES))
    p_ex.add_argument("path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "example-case":
        return cmd_example_case(args.name, args.path)
    config = _config_from_args(args)
    try:
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "validate":
            return cmd_validate(config, args.solution)
        if args.command == "compare":
            return cmd_compare(config, args.det, args.cc)
    except DomainError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_BAD_INPUT
    return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
