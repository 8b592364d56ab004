"""
Acceptance gates applied by `eval --gate`.

Thresholds are pass/fail gates on desk-scale suites, not reproductions of
real-robot numbers.
"""

import logging

from pydantic import BaseModel

from ..schema.eval import TrialResult
from .harness import success_table

logger = logging.getLogger(__name__)

SEEN_SUCCESS_FLOOR = 0.70
LIGHTING_MARGIN = 0.15
NONPREHENSILE_SUCCESS_FLOOR = 0.60
NONPREHENSILE_LIGHTING_MARGIN = 0.10


class GateResult(BaseModel):
    name: str
    value: float
    threshold: float
    passed: bool

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3f} (threshold {self.threshold:.3f})"


def success_at(results: list[TrialResult], k: int = 1, group: str | None = None) -> float:
    chosen = [r for r in results if group is None or r.conditions.get("group") == group]
    if not chosen:
        raise ValueError(f"No results for group {group!r}")
    return sum(r.success_at(k) for r in chosen) / len(chosen)


def gate_monotonic(results: list[TrialResult]) -> GateResult:
    """Largest drop of success@k+1 below success@k over every column; must be ≤ 0."""
    table = success_table(results)
    worst = 0.0
    for i in range(len(table.index) - 1):
        worst = max(worst, float((table.iloc[i] - table.iloc[i + 1]).max()))
    return GateResult(name="success@k nondecreasing", value=worst, threshold=0.0, passed=worst <= 0.0)


def gate_floor(name: str, results: list[TrialResult], threshold: float, group: str | None = None) -> GateResult:
    value = success_at(results, 1, group)
    return GateResult(name=name, value=value, threshold=threshold, passed=value >= threshold)


def gate_margin(name: str, results: list[TrialResult], baseline: list[TrialResult], margin: float,
                group: str | None = None) -> GateResult:
    value = success_at(results, 1, group) - success_at(baseline, 1, group)
    return GateResult(name=name, value=value, threshold=margin, passed=value >= margin)


def evaluate_gates(suite_name: str, results: list[TrialResult],
                   baseline: list[TrialResult] | None = None) -> list[GateResult]:
    """Gates that apply to a suite; margin gates need the ablation baseline's results."""
    gates = [gate_monotonic(results)]
    if suite_name == "seen":
        gates.append(gate_floor("seen success@1", results, SEEN_SUCCESS_FLOOR))
    elif suite_name == "unseen_lighting" and baseline is not None:
        gates.append(gate_margin("unseen lighting margin over baseline", results, baseline, LIGHTING_MARGIN))
    elif suite_name == "nonprehensile":
        gates.append(gate_floor("nonprehensile seen success@1", results, NONPREHENSILE_SUCCESS_FLOOR, "seen"))
        if baseline is not None:
            gates.append(gate_margin("nonprehensile unseen lighting margin", results, baseline,
                                     NONPREHENSILE_LIGHTING_MARGIN, "unseen_lighting"))
    for gate in gates:
        logger.info(gate.describe())
    return gates
