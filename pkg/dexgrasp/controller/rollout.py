"""
Receding-horizon execution and grasp controllers used by the planner.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

import numpy as np
import torch

from ..errors import DexGraspError, TrackLost
from ..perception.segmenter import OracleSegmenter, best_iou_index
from ..perception.tracker import OracleTracker, TrackerCorruption
from ..schema.observation import ActionChunk, BBox, Observation
from ..sim.expert import ScriptedExpert
from ..sim.world import TabletopSim

logger = logging.getLogger(__name__)


class RolloutOutcome(str, Enum):
    SUCCESS = "Success"
    TRACK_LOST = "TrackLost"
    BUDGET_EXHAUSTED = "BudgetExhausted"


class ChunkPolicy(Protocol):
    def predict_chunk(self, observation: Observation, generator: torch.Generator | None = None,
                      start_step: int = 0) -> ActionChunk: ...


@dataclass
class Rollout:
    outcome: RolloutOutcome
    steps: int = 0
    prediction_steps: list[int] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome == RolloutOutcome.SUCCESS


def execute_receding_horizon(
    policy: ChunkPolicy,
    sim: TabletopSim,
    tracker,
    mask: np.ndarray,
    budget: int,
    execute_steps: int,
    generator: torch.Generator | None = None,
) -> Rollout:
    """Predict a chunk, run its first `execute_steps` actions, repeat.

    Stops on success, TrackLost, `budget` chunks, or the simulator's step limit.
    """
    rollout = Rollout(outcome=RolloutOutcome.BUDGET_EXHAUSTED)
    for _ in range(max(budget, 0)):
        observation = sim.observe(mask)
        rollout.prediction_steps.append(rollout.steps)
        chunk = policy.predict_chunk(observation, generator, start_step=rollout.steps)
        for i in range(min(execute_steps, chunk.horizon)):
            action = chunk.actions[i]
            rollout.actions.append(action)
            stepped, done = sim.step(action)
            rollout.steps += 1
            try:
                mask = tracker.track(mask, stepped.head_rgb)
            except TrackLost as e:
                logger.info("rollout stopped: %s", e)
                rollout.outcome = RolloutOutcome.TRACK_LOST
                return rollout
            if sim.success():
                rollout.outcome = RolloutOutcome.SUCCESS
                return rollout
            if done:
                return rollout
    return rollout


# --- controllers the planner delegates to ------------------------------------

@dataclass
class ExecutionResult:
    outcome: str
    steps: int
    lifted: bool


class GraspController(Protocol):
    def execute(self, sim: TabletopSim, bbox: BBox) -> ExecutionResult: ...


class PolicyController:
    """bbox → segment → track while the diffusion policy runs."""

    def __init__(
        self,
        policy: ChunkPolicy,
        chunk_budget: int = 20,
        execute_steps: int = 4,
        seed: int = 0,
        max_occluded: int = 5,
        corruption: TrackerCorruption | None = None,
        segmenter_factory: Callable[[TabletopSim], object] = OracleSegmenter,
    ):
        self.policy = policy
        self.chunk_budget = chunk_budget
        self.execute_steps = execute_steps
        self.generator = torch.Generator().manual_seed(seed)
        self.max_occluded = max_occluded
        self.corruption = corruption
        self.segmenter_factory = segmenter_factory
        self.last_rollout: Rollout | None = None

    def execute(self, sim: TabletopSim, bbox: BBox) -> ExecutionResult:
        image = sim.observe().head_rgb
        try:
            mask = self.segmenter_factory(sim).segment(image, bbox)
            tracker = OracleTracker(sim, self.max_occluded, self.corruption)
            mask = tracker.initialize(mask)
        except DexGraspError as e:
            logger.warning("could not start execution: %s", e)
            return ExecutionResult(outcome=e.code, steps=0, lifted=False)
        rollout = execute_receding_horizon(
            self.policy, sim, tracker, mask, self.chunk_budget, self.execute_steps, self.generator
        )
        self.last_rollout = rollout
        return ExecutionResult(outcome=rollout.outcome.value, steps=rollout.steps, lifted=rollout.success)


class ExpertController:
    """Scripted expert behind the controller interface (oracle baseline)."""

    def __init__(self, task_kind: str = "grasp", seed: int = 0, noise_std: float = 0.0, max_steps: int | None = None):
        self.task_kind = task_kind
        self.rng = np.random.default_rng(seed)
        self.noise_std = noise_std
        self.max_steps = max_steps

    def execute(self, sim: TabletopSim, bbox: BBox) -> ExecutionResult:
        try:
            index, _ = best_iou_index(sim.id_buffer(), bbox)
        except DexGraspError as e:
            return ExecutionResult(outcome=e.code, steps=0, lifted=False)
        target = sim.state.scene.objects[index].object_id
        expert = ScriptedExpert(target, self.task_kind, self.rng, self.noise_std)
        try:
            expert.begin(sim.state)
        except DexGraspError as e:
            return ExecutionResult(outcome=e.code, steps=0, lifted=False)
        limit = self.max_steps or sim.config.max_steps
        steps = 0
        while steps < limit and not sim.success():
            sim.step(expert.act(sim.state))
            steps += 1
        lifted = sim.success()
        outcome = RolloutOutcome.SUCCESS if lifted else RolloutOutcome.BUDGET_EXHAUSTED
        return ExecutionResult(outcome=outcome.value, steps=steps, lifted=lifted)
