"""Artifact emission: JSON and CSV reports plus rendered figures.

Every structured artifact is validated against its schema before it is
written, and nothing here embeds wall-clock state, so identical runs
produce byte-identical files.  Figures are rendered alongside the
delimited output: a bound-convergence plot for solves and per-hour
violation-count plots for validation and comparison reports.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .formulation import CommitmentSolution
from .validation import ComparisonReport, ValidationReport

_PNG_META = {"Software": "sccuc"}

_NUM = {"type": "number"}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}

SOLUTION_SCHEMA = {
    "type": "object",
    "required": [
        "case_name", "case_fingerprint", "mode", "horizon", "generators",
        "on", "start", "stop", "startup_block", "p", "block_output", "alpha",
        "r_plus", "r_minus", "r_up", "delta", "objective", "cost_components", "gap",
    ],
    "properties": {
        "case_name": {"type": "string"},
        "case_fingerprint": {"type": "string"},
        "mode": {"type": "string"},
        "horizon": {"type": "integer", "minimum": 1},
        "generators": {"type": "array", "items": {"type": "string"}},
        "on": _MATRIX, "start": _MATRIX, "stop": _MATRIX, "startup_block": _MATRIX,
        "p": _MATRIX, "alpha": _MATRIX, "r_plus": _MATRIX, "r_minus": _MATRIX,
        "r_up": _MATRIX,
        "block_output": {"type": "object", "additionalProperties": _MATRIX},
        "delta": {"type": "object", "additionalProperties": _MATRIX},
        "objective": _NUM,
        "cost_components": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _NUM},
        },
        "gap": _NUM,
    },
}

VALIDATION_SCHEMA = {
    "type": "object",
    "required": [
        "case_name", "case_fingerprint", "solution_mode", "distribution", "shape",
        "samples", "seed", "designed_eps", "per_constraint", "max_by_class",
        "exceeds_design", "hourly_any_violation",
    ],
    "properties": {
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "per_constraint": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        },
        "max_by_class": {"type": "object", "additionalProperties": _NUM},
        "exceeds_design": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "hourly_any_violation": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

COMPARISON_SCHEMA = {
    "type": "object",
    "required": [
        "case_name", "first_label", "second_label", "rows",
        "hourly_any_violation", "samples", "distribution", "seed",
    ],
    "properties": {
        "rows": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        },
        "hourly_any_violation": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "integer"}},
        },
    },
}

ITERATION_RECORD_SCHEMA = {
    "type": "object",
    "required": ["type", "iteration"],
    "properties": {"type": {"enum": ["inner", "outer"]}, "iteration": {"type": "integer"}},
}


def _write_json(payload: dict, schema: dict, path: Path) -> None:
    jsonschema.validate(payload, schema)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_solution(solution: CommitmentSolution, path: Path) -> None:
    _write_json(solution.to_dict(), SOLUTION_SCHEMA, path)


def load_solution(path: Path) -> CommitmentSolution:
    payload = json.loads(Path(path).read_text())
    jsonschema.validate(payload, SOLUTION_SCHEMA)
    return CommitmentSolution.from_dict(payload)


def write_schedule_csv(solution: CommitmentSolution, path: Path) -> None:
    """Long-format unit-by-hour schedule: status plus dispatch quantities."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["generator", "hour", "on", "start", "stop", "p_mw",
             "alpha", "r_plus_mw", "r_minus_mw", "r_up_mw"]
        )
        for gi, name in enumerate(solution.generator_names):
            for t in range(solution.horizon):
                writer.writerow(
                    [
                        name, t + 1,
                        int(solution.on[gi, t]), int(solution.start[gi, t]),
                        int(solution.stop[gi, t]),
                        f"{solution.p[gi, t]:.6f}", f"{solution.alpha[gi, t]:.6f}",
                        f"{solution.r_plus[gi, t]:.6f}", f"{solution.r_minus[gi, t]:.6f}",
                        f"{solution.r_up[gi, t]:.6f}",
                    ]
                )


_COST_ROWS = [
    ("total_cost", None),
    ("no_load_cost", "no_load"),
    ("startup_cost", "startup"),
    ("production_cost", "production"),
    ("tertiary_reserve_cost", "tertiary_reserve"),
    ("generation_reserve_cost", "generation_reserve"),
]


def write_costs_csv(solution: CommitmentSolution, path: Path) -> None:
    totals = solution.total_costs()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "dollars"])
        for label, key in _COST_ROWS:
            value = solution.objective if key is None else totals[key]
            writer.writerow([label, f"{value:.4f}"])
        writer.writerow(["optimality_gap", f"{solution.gap:.6f}"])
        writer.writerow(
            ["generation_reserves_mw", f"{solution.total_generation_reserve_mw():.4f}"]
        )


def write_iteration_log(records: list[dict], path: Path) -> None:
    with open(path, "w") as fh:
        for record in records:
            jsonschema.validate(record, ITERATION_RECORD_SCHEMA)
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def render_bounds_figure(records: list[dict], path: Path) -> None:
    """Lower/upper bound trajectory over inner iterations."""
    inner = [r for r in records if r.get("type") == "inner"]
    if not inner:
        return
    iters = [r["iteration"] for r in inner]
    fig, ax = plt.subplots(figsize=(6, 4))
    lb = [(i, r["lower_bound"]) for i, r in zip(iters, inner) if r["lower_bound"] is not None]
    if lb:
        ax.plot([i for i, _ in lb], [v for _, v in lb], marker="o", label="lower bound")
    ub = [(i, r["upper_bound"]) for i, r in zip(iters, inner) if r["upper_bound"] is not None]
    if ub:
        ax.plot([i for i, _ in ub], [v for _, v in ub], marker="s", label="upper bound")
    ax.set_xlabel("inner iteration")
    ax.set_ylabel("cost ($)")
    if lb or ub:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)


def write_validation_report(report: ValidationReport, stem: Path) -> list[Path]:
    """JSON + per-constraint CSV + hourly CSV + hourly figure for one report."""
    out = []
    json_path = stem.with_suffix(".json")
    _write_json(report.to_dict(), VALIDATION_SCHEMA, json_path)
    out.append(json_path)

    csv_path = stem.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["constraint", "empirical_violation_probability"])
        for key, prob in sorted(report.per_constraint.items()):
            writer.writerow([key, f"{prob:.6f}"])
        for cls, prob in sorted(report.max_by_class.items()):
            writer.writerow([f"max|{cls}", f"{prob:.6f}"])
    out.append(csv_path)

    hourly_path = stem.parent / (stem.name + "_hourly.csv")
    with open(hourly_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "samples_with_any_violation"])
        for t, count in enumerate(report.hourly_any_violation, start=1):
            writer.writerow([t, count])
    out.append(hourly_path)

    fig_path = stem.parent / (stem.name + "_hourly.png")
    fig, ax = plt.subplots(figsize=(7, 4))
    hours = range(1, len(report.hourly_any_violation) + 1)
    ax.bar(hours, report.hourly_any_violation, color="tab:blue")
    ax.set_xlabel("hour")
    ax.set_ylabel(f"samples with a violation (of {report.samples})")
    ax.set_title(f"{report.distribution} deviations")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    out.append(fig_path)
    return out


def write_comparison_report(report: ComparisonReport, outdir: Path) -> list[Path]:
    """Cost table, per-hour violation series, and the series figure."""
    out = []
    json_path = outdir / "comparison.json"
    _write_json(report.to_dict(), COMPARISON_SCHEMA, json_path)
    out.append(json_path)

    table_path = outdir / "comparison.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", report.first_label, report.second_label])
        for metric, (a, b) in report.rows.items():
            writer.writerow([metric, f"{a:.4f}", f"{b:.4f}"])
    out.append(table_path)

    series_path = outdir / "hourly_violations.csv"
    first = report.hourly_any_violation[report.first_label]
    second = report.hourly_any_violation[report.second_label]
    with open(series_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", report.first_label, report.second_label])
        for t, (a, b) in enumerate(zip(first, second), start=1):
            writer.writerow([t, a, b])
    out.append(series_path)

    fig_path = outdir / "hourly_violations.png"
    fig, ax = plt.subplots(figsize=(7, 4))
    hours = list(range(1, len(first) + 1))
    width = 0.4
    ax.bar([h - width / 2 for h in hours], first, width=width, label=report.first_label)
    ax.bar([h + width / 2 for h in hours], second, width=width, label=report.second_label)
    ax.set_xlabel("hour")
    ax.set_ylabel(f"samples with a violation (of {report.samples})")
    ax.set_title(f"{report.distribution} deviations, n={report.samples}")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    out.append(fig_path)
    return out
