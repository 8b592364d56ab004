"""
Schemas for the planner: phases, grasp tasks and transcripts.
"""

from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .observation import BBox


class PlannerPhase(str, Enum):
    CHECK_COMPLETION = "CheckCompletion"
    PROPOSE_INSTRUCTION = "ProposeInstruction"
    PREDICT_BBOX = "PredictBBox"
    EXECUTING = "Executing"
    VERIFY_GRASP = "VerifyGrasp"
    PLACE = "Place"
    RESET = "Reset"
    DONE = "Done"
    FAILED = "Failed"


class GraspTask(BaseModel):
    """One grasping instruction derived from a user prompt."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    user_prompt: str
    instruction: str
    bbox: BBox | None = None
    attempt_count: int = 0
    max_attempts: int = 3
    initial_head_image: np.ndarray | None = None

    @field_validator("user_prompt", "instruction")
    @classmethod
    def normalize_text(cls, v: str) -> str:
        return " ".join(v.split())

    @property
    def exhausted(self) -> bool:
        return self.attempt_count >= self.max_attempts


class TranscriptRecord(BaseModel):
    """One planner step: a sub-task exchange or a control phase."""

    phase: PlannerPhase
    subtask: str | None = None
    prompt_text: str = ""
    raw_response: str = ""
    parsed: Any = None
    error: str | None = None
    wall_time: float = 0.0
    ground_truth: dict[str, Any] | None = None


class PlannerTranscript(BaseModel):
    """Append-only log of a run_prompt call."""

    user_prompt: str
    records: list[TranscriptRecord] = []

    def append(self, record: TranscriptRecord) -> TranscriptRecord:
        self.records.append(record)
        return record

    def subtask_records(self, subtask: str) -> list[TranscriptRecord]:
        return [r for r in self.records if r.subtask == subtask]

    def phases(self) -> list[PlannerPhase]:
        """Phase sequence with consecutive duplicates collapsed."""
        out: list[PlannerPhase] = []
        for r in self.records:
            if not out or out[-1] != r.phase:
                out.append(r.phase)
        return out
