#!/usr/bin/env python3
"""
Acceptance evaluation for closed-loop planner runs.

Custom evaluators score one run summary each:
1. Safety - no collision and inverse-TTC KPI within bound
2. Comfort - weighted absolute acceleration KPI within bound
3. Feasibility - share of unsaturated control steps
4. Effort - mean absolute traction force
5. Progress - route distance travelled against the intended distance
6. Timing - mean planner wall time (soft, never FAIL)

A run summary is a flat dict with keys scenario, seed, status, K_s, K_c,
K_f, mean_abs_F (N), progress and plan_time_mean (ms), as produced by
summary_from_log() or read back from a kpi_summary.csv.
"""

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PASS_SCORE = 1.0
PARTIAL_SCORE = 0.70

# kpi_summary.csv header -> summary key, scale back to SI
CSV_FIELDS = {
    'K_s [1/s]': ('K_s', 1.0),
    'K_c [g]': ('K_c', 1.0),
    'K_f [-]': ('K_f', 1.0),
    'mean_abs_F [kN]': ('mean_abs_F', 1e3),
    'progress [-]': ('progress', 1.0),
    'plan_time_mean [ms]': ('plan_time_mean', 1.0),
}


def _status(score: float) -> str:
    return "PASS" if score >= PASS_SCORE else "PARTIAL" if score >= PARTIAL_SCORE else "FAIL"


def _upper_score(value: float, limit: float) -> float:
    """1 when value <= limit, shrinking as value overshoots."""
    if value <= limit:
        return 1.0
    return limit / value if value > 0 else 0.0


def _lower_score(value: float, limit: float) -> float:
    """1 when value >= limit, otherwise the fraction reached."""
    if value >= limit:
        return 1.0
    return max(value, 0.0) / limit


def _missing(summary: Dict[str, Any], key: str) -> bool:
    value = summary.get(key)
    return value is None or (isinstance(value, float) and math.isnan(value))


class _BoundEvaluator:
    """Checks one KPI against an upper or lower bound."""

    name = ""
    key = ""
    upper = True

    def __init__(self, limit: float):
        self.limit = limit

    def __call__(self, *, scenario: str, **summary) -> Dict[str, Any]:
        if _missing(summary, self.key):
            return {"scenario": scenario, "evaluator": self.name, "score": 0.0,
                    "status": "NO_DATA", "reason": f"{self.key} missing"}
        value = float(summary[self.key])
        score = _upper_score(value, self.limit) if self.upper else _lower_score(value, self.limit)
        return {
            "scenario": scenario,
            "evaluator": self.name,
            "value": round(value, 6),
            "limit": self.limit,
            "score": round(score, 2),
            "status": _status(score),
        }


class SafetyEvaluator(_BoundEvaluator):
    """
    Any collision fails the run outright; otherwise K_s (mean inverse TTC)
    must stay at or below the limit.
    """

    name = "safety"
    key = "K_s"

    def __init__(self, limit: float = 1.0):
        super().__init__(limit)

    def __call__(self, *, scenario: str, **summary) -> Dict[str, Any]:
        if summary.get("status") == "collision":
            return {"scenario": scenario, "evaluator": self.name, "score": 0.0,
                    "status": "FAIL", "reason": "collision"}
        return super().__call__(scenario=scenario, **summary)


class ComfortEvaluator(_BoundEvaluator):
    name = "comfort"
    key = "K_c"

    def __init__(self, limit: float = 0.02):
        super().__init__(limit)


class FeasibilityEvaluator(_BoundEvaluator):
    name = "feasibility"
    key = "K_f"
    upper = False

    def __init__(self, limit: float = 0.75):
        super().__init__(limit)


class EffortEvaluator(_BoundEvaluator):
    name = "effort"
    key = "mean_abs_F"

    def __init__(self, limit: float = 8000.0):
        super().__init__(limit)


class ProgressEvaluator(_BoundEvaluator):
    name = "progress"
    key = "progress"
    upper = False

    def __init__(self, limit: float = 0.95):
        super().__init__(limit)


class TimingEvaluator(_BoundEvaluator):
    """Soft criterion: slow planning is reported as PARTIAL, never FAIL."""

    name = "timing"
    key = "plan_time_mean"

    def __init__(self, limit: float = 500.0):
        super().__init__(limit)

    def __call__(self, *, scenario: str, **summary) -> Dict[str, Any]:
        result = super().__call__(scenario=scenario, **summary)
        if result["status"] == "FAIL":
            result["status"] = "PARTIAL"
        return result


def default_evaluators(config: dict = None) -> Dict[str, _BoundEvaluator]:
    """Evaluators with limits from the `evaluation` config section."""
    ec = (config or {}).get('evaluation', {})
    return {
        "safety": SafetyEvaluator(ec.get('max_k_safety', 1.0)),
        "comfort": ComfortEvaluator(ec.get('max_k_comfort', 0.02)),
        "feasibility": FeasibilityEvaluator(ec.get('min_k_feasibility', 0.75)),
        "effort": EffortEvaluator(ec.get('max_mean_force', 8000.0)),
        "progress": ProgressEvaluator(ec.get('min_progress', 0.95)),
        "timing": TimingEvaluator(ec.get('max_plan_time_ms', 500.0)),
    }


def summary_from_log(log) -> Dict[str, Any]:
    """Flat run summary from a RunLog."""
    summary = {"scenario": log.scenario_id, "seed": log.seed, "status": log.status}
    summary.update(log.kpis)
    summary["plan_time_mean"] = log.timing_summary()["plan_time_mean"]
    return summary


def load_summaries(csv_path) -> List[Dict[str, Any]]:
    """Run summaries from a kpi_summary.csv, skipping the AVERAGE row."""
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise FileNotFoundError(f"Missing file: {csv_path}")
    summaries = []
    with open(csv_path, newline='', encoding='utf-8') as f:
        for row in csv.DictReader(f):
            if row['scenario'] == 'AVERAGE':
                continue
            summary = {"scenario": row['scenario'], "seed": int(row['seed']), "status": row['status']}
            for header, (key, scale) in CSV_FIELDS.items():
                cell = row.get(header, "")
                summary[key] = float(cell) * scale if cell != "" else None
            summaries.append(summary)
    return summaries


def aggregate_row(summaries: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Averaged row over runs; status is the worst outcome seen."""
    row: Dict[str, Any] = {"scenario": "AVERAGE"}
    for key in ("K_s", "K_c", "K_f", "mean_abs_F", "progress", "plan_time_mean"):
        values = [float(s[key]) for s in summaries if not _missing(s, key)]
        row[key] = float(np.mean(values)) if values else None
    collided = any(s.get("status") == "collision" for s in summaries)
    row["status"] = "collision" if collided else "completed"
    row["collisions"] = sum(1 for s in summaries if s.get("status") == "collision")
    return row


def evaluate_batch(
    summaries: Sequence[Dict[str, Any]],
    output_path: Optional[str] = "output/evaluation_results.json",
    config: dict = None,
) -> Dict[str, Any]:
    """
    Evaluate every run summary plus the averaged row.

    Args:
        summaries: Run summaries (see module docstring)
        output_path: Where to write the JSON results (None to skip writing)
        config: Optional configuration with an `evaluation` section

    Returns:
        Dictionary with per-run results, the averaged row, its evaluation and
        an overall status
    """
    evaluators = default_evaluators(config)
    logger.info(f"Evaluating {len(summaries)} run(s) with {len(evaluators)} evaluators")

    rows = []
    for summary in summaries:
        fields = {k: v for k, v in summary.items() if k != "scenario"}
        results = {name: ev(scenario=summary["scenario"], **fields) for name, ev in evaluators.items()}
        rows.append({"scenario": summary["scenario"], "seed": summary.get("seed"), "results": results})

    average = aggregate_row(summaries) if summaries else None
    average_results = {}
    if average is not None:
        fields = {k: v for k, v in average.items() if k != "scenario"}
        average_results = {name: ev(scenario="AVERAGE", **fields) for name, ev in evaluators.items()}

    statuses = [r["status"] for row in rows for r in row["results"].values()]
    statuses += [r["status"] for r in average_results.values()]
    if not statuses:
        overall = "NO_DATA"
    elif "FAIL" in statuses:
        overall = "FAIL"
    elif any(s != "PASS" for s in statuses):
        overall = "PARTIAL"
    else:
        overall = "PASS"

    evaluation = {
        "status": overall,
        "runs": rows,
        "average": average,
        "average_results": average_results,
        "metrics": {
            f"{name}.pass_rate": round(
                sum(1 for row in rows if row["results"][name]["status"] == "PASS") / len(rows), 2)
            for name in evaluators
        } if rows else {},
    }

    logger.info(f"EVALUATION SUMMARY: {overall}")
    for metric_name, metric_value in evaluation["metrics"].items():
        logger.info(f"  {metric_name}: {metric_value}")

    if output_path:
        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        with open(output_file, 'w', encoding='utf-8') as f:
            json.dump(evaluation, f, indent=2, sort_keys=True)
        logger.info(f"Full results saved to: {output_file}")
    return evaluation


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Evaluate a kpi_summary.csv against acceptance bounds")
    parser.add_argument('summary', help="Path to kpi_summary.csv")
    parser.add_argument('--output', default=None,
                        help="Results JSON (default: evaluation_results.json next to the summary)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    try:
        summaries = load_summaries(args.summary)
        output = args.output or str(Path(args.summary).parent / "evaluation_results.json")
        result = evaluate_batch(summaries, output)
    except Exception as e:
        logger.error(f"Evaluation failed: {e}")
        return 2
    return 0 if result["status"] in ("PASS", "PARTIAL") else 1


if __name__ == "__main__":
    sys.exit(main())
