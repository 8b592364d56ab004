"""
Trial and suite runner.

A trial is up to k independent attempts on one scene; the simulator is
reset between attempts and the trial stops at its first success. Within an
attempt the planner may re-grasp after a failed verification; those
re-grasps are not counted as attempts.
"""

import concurrent.futures
import json
import logging
from pathlib import Path
from typing import Callable

import pandas as pd

from ..controller.rollout import GraspController
from ..errors import DexGraspError
from ..planner.backends import PlannerBackend
from ..planner.machine import predict_bbox, verify_grasp
from ..planner.predicates import instruction_for
from ..planner.workspace import crop_workspace
from ..schema.config import SimConfig
from ..schema.eval import BenchmarkSuite, SuiteEntry, TrialResult
from ..schema.planner import PlannerTranscript
from ..sim.world import TabletopSim

logger = logging.getLogger(__name__)

ControllerFactory = Callable[[int], GraspController]
BackendFactory = Callable[[TabletopSim], PlannerBackend]


def trial_seed(suite_seed: int, index: int) -> int:
    return suite_seed * 100_003 + index


def target_lifted(sim: TabletopSim, target_id: str) -> bool:
    return sim.success() and sim.state.held_object == target_id


def run_attempt(
    sim: TabletopSim,
    entry: SuiteEntry,
    controller: GraspController,
    backend: PlannerBackend,
    transcript: PlannerTranscript,
    regrasps: int = 2,
) -> tuple[bool, int]:
    """One attempt: bbox → execute → verify, re-grasping on a negative verdict."""
    target = sim.state.scene.object(entry.target_object_id)
    instruction = instruction_for(sim.state, target)
    workspace = sim.config.workspace_pixels()
    steps = 0
    for _ in range(1 + regrasps):
        try:
            head = crop_workspace(sim.observe().head_rgb, workspace)
            bbox, _ = predict_bbox(instruction, head, backend, transcript)
        except DexGraspError as e:
            logger.debug("%s: bbox prediction failed: %s", entry.trial_id, e)
            return False, steps
        result = controller.execute(sim, bbox)
        steps += result.steps
        obs = sim.observe()
        try:
            verdict, _ = verify_grasp(obs.head_rgb, obs.wrist_rgb, instruction, backend, transcript)
        except DexGraspError:
            verdict = False
        if verdict or target_lifted(sim, entry.target_object_id):
            break
        sim.reset_robot()
    return target_lifted(sim, entry.target_object_id), steps


def run_trial(
    entry: SuiteEntry,
    controller: GraspController,
    backend_factory: BackendFactory,
    sim_config: SimConfig | None = None,
    k: int | None = None,
    regrasps: int = 2,
    transcript_dir: str | Path | None = None,
) -> TrialResult:
    """Up to k attempts; success if any attempt lifts the target."""
    k = min(k or entry.k_max, entry.k_max)
    first_success = None
    steps = 0
    path = None
    attempt = 0
    for attempt in range(1, k + 1):
        sim = TabletopSim(sim_config)
        sim.reset(entry.scene)
        transcript = PlannerTranscript(user_prompt=entry.prompt)
        ok, used = run_attempt(sim, entry, controller, backend_factory(sim), transcript, regrasps)
        steps += used
        if transcript_dir is not None:
            path = Path(transcript_dir) / f"{entry.trial_id}_attempt{attempt}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(transcript.model_dump_json(indent=2))
        if ok:
            first_success = attempt
            break
    return TrialResult(
        trial_id=entry.trial_id,
        conditions=entry.conditions,
        k_max=k,
        attempts=attempt,
        first_success=first_success,
        steps=steps,
        transcript_path=str(path) if path else None,
    )


def run_suite(
    suite: BenchmarkSuite,
    controller_factory: ControllerFactory,
    backend_factory: BackendFactory,
    sim_config: SimConfig | None = None,
    k: int | None = None,
    jobs: int = 1,
    transcript_dir: str | Path | None = None,
    progress: Callable[[TrialResult], None] | None = None,
) -> list[TrialResult]:
    """Run every entry; results come back ordered by trial id whatever `jobs` is."""

    def one(index: int) -> TrialResult:
        entry = suite.entries[index]
        controller = controller_factory(trial_seed(suite.seed, index))
        result = run_trial(entry, controller, backend_factory, sim_config, k, transcript_dir=transcript_dir)
        if progress:
            progress(result)
        return result

    if jobs <= 1:
        results = [one(i) for i in range(len(suite.entries))]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(len(suite.entries))))
    return sorted(results, key=lambda r: r.trial_id)


# --- tables ------------------------------------------------------------------

def success_table(results: list[TrialResult], k_max: int | None = None, group_key: str = "group") -> pd.DataFrame:
    """Rows success@1..k, one column per condition group plus the aggregate.

    aggregate = Σ successes / Σ trials over all groups.
    """
    if not results:
        raise ValueError("No trial results")
    k_max = k_max or max(r.k_max for r in results)
    rows = [
        {"group": r.conditions.get(group_key, "all"), **{f"success@{j}": r.success_at(j) for j in range(1, k_max + 1)}}
        for r in results
    ]
    frame = pd.DataFrame(rows)
    per_group = frame.groupby("group", sort=True).mean(numeric_only=True).T
    per_group["aggregate"] = frame.drop(columns="group").mean()
    return per_group


def trial_counts(results: list[TrialResult], group_key: str = "group") -> pd.Series:
    frame = pd.DataFrame([{"group": r.conditions.get(group_key, "all")} for r in results])
    counts = frame.groupby("group", sort=True).size()
    counts["aggregate"] = len(results)
    return counts


def format_table(table: pd.DataFrame, counts: pd.Series | None = None) -> str:
    shown = table.map(lambda v: f"{100 * v:.1f}%")
    if counts is not None:
        shown.loc["trials"] = counts.reindex(shown.columns).astype(int).astype(str)
    return shown.to_string()


def write_report(out_dir: str | Path, name: str, results: list[TrialResult]) -> dict[str, Path]:
    """<out>/<name>_results.json, <name>_table.csv and <name>_table.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = success_table(results)
    paths = {
        "results": out_dir / f"{name}_results.json",
        "csv": out_dir / f"{name}_table.csv",
        "text": out_dir / f"{name}_table.txt",
    }
    with open(paths["results"], "w") as f:
        json.dump([r.model_dump(mode="json") for r in results], f, indent=2)
    table.to_csv(paths["csv"], index_label="metric")
    paths["text"].write_text(format_table(table, trial_counts(results)) + "\n")
    return paths


def load_results(path: str | Path) -> list[TrialResult]:
    with open(path) as f:
        return [TrialResult.model_validate(r) for r in json.load(f)]
