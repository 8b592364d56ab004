"""
Long-horizon prompts: run the full planner loop and judge every sub-task
against simulator ground truth.

Sub-task correctness:
    propose_instruction  the named object exists on the table and satisfies the prompt
                         ("None" is correct only when nothing relevant is left)
    predict_bbox         every edge within `slack` px of the target's tight bound
    grasping             the controller lifted an object
    check_completion     the verdict matches whether relevant objects remain
"""

import json
import logging
from pathlib import Path

import pandas as pd

from ..controller.rollout import GraspController
from ..errors import OccludedTarget
from ..planner.machine import RunLimits, RunOutcome, run_prompt
from ..planner.predicates import PromptPredicate, object_matches_instruction, parse_prompt, remaining, resolve_instruction
from ..schema.config import SimConfig
from ..schema.eval import SUBTASKS, LongHorizonResult, SuiteEntry
from ..schema.observation import BBox
from ..schema.planner import PlannerPhase, PlannerTranscript, TranscriptRecord
from ..sim.world import TabletopSim
from .harness import BackendFactory

logger = logging.getLogger(__name__)


def bbox_accurate(predicted: BBox, truth: BBox, slack: int = 2) -> bool:
    return all(abs(a - b) <= slack for a, b in zip(predicted.as_list(), truth.as_list()))


class GroundTruthAnnotator:
    """Transcript hook that stamps each sub-task record with its correctness."""

    def __init__(self, sim: TabletopSim, predicate: PromptPredicate, slack: int = 2):
        self.sim = sim
        self.predicate = predicate
        self.slack = slack
        self.instruction: str | None = None

    def __call__(self, record: TranscriptRecord) -> dict | None:
        handler = getattr(self, f"_{record.subtask}", None)
        return handler(record) if handler else None

    def _propose_instruction(self, record: TranscriptRecord) -> dict:
        state = self.sim.state
        if record.error == "NoCandidate":
            return {"correct": not remaining(state, self.predicate)}
        if record.error is not None:
            return {"correct": False}
        self.instruction = record.parsed
        obj = resolve_instruction(state, record.parsed)
        return {
            "correct": obj is not None and self.predicate.matches(obj),
            "object_id": obj.object_id if obj else None,
        }

    def _predict_bbox(self, record: TranscriptRecord) -> dict:
        if record.error is not None or self.instruction is None:
            return {"correct": False}
        obj = resolve_instruction(self.sim.state, self.instruction)
        if obj is None:
            return {"correct": False}
        try:
            truth = self.sim.gt_bbox(obj.object_id)
        except OccludedTarget:
            return {"correct": False}
        predicted = BBox(**dict(zip(("x1", "y1", "x2", "y2"), record.parsed[0])))
        return {"correct": bbox_accurate(predicted, truth, self.slack), "truth": truth.as_list()}

    def _verify_grasp(self, record: TranscriptRecord) -> dict:
        if record.error is not None:
            return {"correct": False}
        state = self.sim.state
        held = state.scene.object(state.held_object) if state.held_object else None
        truth = held is not None and self.instruction is not None and object_matches_instruction(held, self.instruction)
        return {"correct": bool(record.parsed[0]) == truth, "truth": truth}

    def _check_completion(self, record: TranscriptRecord) -> dict:
        if record.error is not None:
            return {"correct": False}
        truth = not remaining(self.sim.state, self.predicate)
        return {"correct": bool(record.parsed[0]) == truth, "truth": truth}


def subtask_counts(transcript: PlannerTranscript) -> dict[str, tuple[int, int]]:
    """(correct, total) per sub-task from annotated records and execution marks."""
    counts = {name: [0, 0] for name in SUBTASKS}
    for record in transcript.records:
        if record.phase == PlannerPhase.EXECUTING and isinstance(record.parsed, dict):
            counts["grasping"][0] += int(bool(record.parsed.get("lifted")))
            counts["grasping"][1] += 1
        elif record.subtask in counts and record.ground_truth is not None:
            counts[record.subtask][0] += int(bool(record.ground_truth.get("correct")))
            counts[record.subtask][1] += 1
    return {name: (c, t) for name, (c, t) in counts.items()}


def run_long_horizon(
    entry: SuiteEntry,
    controller: GraspController,
    backend_factory: BackendFactory,
    sim_config: SimConfig | None = None,
    limits: RunLimits | None = None,
    slack: int = 2,
    transcript_dir: str | Path | None = None,
) -> LongHorizonResult:
    sim = TabletopSim(sim_config)
    sim.reset(entry.scene)
    predicate = parse_prompt(entry.prompt)
    annotator = GroundTruthAnnotator(sim, predicate, slack)
    transcript, outcome = run_prompt(entry.prompt, sim, controller, backend_factory(sim), limits, annotator)

    removed = [sim.state.scene.object(i) for i in sim.state.removed]
    task_success = (
        outcome == RunOutcome.DONE
        and not remaining(sim.state, predicate)
        and all(predicate.matches(o) for o in removed)
    )
    executions = sum(1 for r in transcript.records if r.phase == PlannerPhase.EXECUTING and r.parsed is not None)
    path = None
    if transcript_dir is not None:
        path = Path(transcript_dir) / f"{entry.trial_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(transcript.model_dump_json(indent=2))
    result = LongHorizonResult(
        trial_id=entry.trial_id,
        prompt=entry.prompt,
        conditions=entry.conditions,
        outcome=outcome.value,
        task_success=task_success,
        objects_grasped=len(removed),
        executions=executions,
        subtask_counts=subtask_counts(transcript),
        transcript_path=str(path) if path else None,
    )
    logger.info("%s %r: success=%s grasped=%d executions=%d", entry.trial_id, entry.prompt,
                task_success, len(removed), executions)
    return result


# --- summaries ---------------------------------------------------------------

def summarize(results: list[LongHorizonResult]) -> pd.Series:
    """Task success, attempts per grasp over successful tests, and sub-task rates."""
    if not results:
        raise ValueError("No long-horizon results")
    out = {"task_success": sum(r.task_success for r in results) / len(results)}
    successful = [r for r in results if r.task_success]
    grasped = sum(r.objects_grasped for r in successful)
    out["avg_attempts_per_grasp"] = sum(r.executions for r in successful) / grasped if grasped else float("nan")
    for name in SUBTASKS:
        correct = sum(r.subtask_counts.get(name, (0, 0))[0] for r in results)
        total = sum(r.subtask_counts.get(name, (0, 0))[1] for r in results)
        out[name] = correct / total if total else float("nan")
    return pd.Series(out)


def bbox_accuracy_by_condition(results: list[LongHorizonResult], group_key: str = "group") -> pd.Series:
    """Bounding-box accuracy per distraction condition."""
    rows = []
    for r in results:
        correct, total = r.subtask_counts.get("predict_bbox", (0, 0))
        rows.append({"group": r.conditions.get(group_key, "all"), "correct": correct, "total": total})
    frame = pd.DataFrame(rows).groupby("group", sort=True).sum()
    return frame["correct"] / frame["total"].where(frame["total"] > 0)


def write_long_horizon_report(out_dir: str | Path, name: str, results: list[LongHorizonResult]) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out_dir / f"{name}_results.json",
        "csv": out_dir / f"{name}_summary.csv",
        "text": out_dir / f"{name}_summary.txt",
    }
    with open(paths["results"], "w") as f:
        json.dump([r.model_dump(mode="json") for r in results], f, indent=2)
    summary = summarize(results)
    bbox = bbox_accuracy_by_condition(results)
    frame = pd.concat([summary, bbox.add_prefix("bbox_accuracy/")])
    frame.to_frame("value").to_csv(paths["csv"], index_label="metric")
    shown = pd.Series({
        metric: f"{value:.2f}" if metric == "avg_attempts_per_grasp" else f"{100 * value:.1f}%"
        for metric, value in frame.items()
    })
    paths["text"].write_text(shown.to_string() + "\n")
    return paths
