"""
Schemas for benchmark suites, trial results and long-horizon results.
"""

from pydantic import BaseModel, field_validator, model_validator

from .scene import SceneSpec

SUBTASKS = ("propose_instruction", "predict_bbox", "grasping", "check_completion")


class SuiteEntry(BaseModel):
    """One test: a scene, what to grasp, and the condition labels it reports under."""

    trial_id: str
    scene: SceneSpec
    prompt: str
    target_object_id: str | None = None
    conditions: dict[str, str] = {}
    k_max: int = 3

    @field_validator("k_max")
    @classmethod
    def validate_k(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"k_max must be at least 1: {v}")
        return v


class BenchmarkSuite(BaseModel):
    """A named, seeded list of tests."""

    name: str
    kind: str = "grasp"
    seed: int
    entries: list[SuiteEntry]

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v: str) -> str:
        if v not in ("grasp", "nonprehensile", "long_horizon"):
            raise ValueError(f"Unknown suite kind: {v}")
        return v

    @model_validator(mode="after")
    def check_entries(self) -> "BenchmarkSuite":
        if not self.entries:
            raise ValueError(f"Suite {self.name} has no entries")
        ids = [e.trial_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Suite {self.name} has duplicate trial ids")
        if self.kind != "long_horizon" and any(e.target_object_id is None for e in self.entries):
            raise ValueError(f"Suite {self.name}: every grasp entry needs a target")
        return self

    @property
    def k_max(self) -> int:
        return max(e.k_max for e in self.entries)


class TrialResult(BaseModel):
    """Outcome of up to k attempts on one suite entry."""

    trial_id: str
    conditions: dict[str, str] = {}
    k_max: int
    attempts: int
    first_success: int | None = None
    steps: int = 0
    transcript_path: str | None = None

    @model_validator(mode="after")
    def check_attempts(self) -> "TrialResult":
        if not 1 <= self.attempts <= self.k_max:
            raise ValueError(f"attempts {self.attempts} outside [1, {self.k_max}]")
        if self.first_success is not None and self.first_success != self.attempts:
            raise ValueError("A successful trial stops at its first success")
        return self

    @property
    def success(self) -> bool:
        return self.first_success is not None

    def success_at(self, k: int) -> bool:
        return self.first_success is not None and self.first_success <= k


class LongHorizonResult(BaseModel):
    """One prompt run end to end, with per-sub-task correctness counts."""

    trial_id: str
    prompt: str
    conditions: dict[str, str] = {}
    outcome: str
    task_success: bool
    objects_grasped: int
    executions: int
    subtask_counts: dict[str, tuple[int, int]] = {}
    transcript_path: str | None = None

    @field_validator("subtask_counts")
    @classmethod
    def validate_counts(cls, v: dict[str, tuple[int, int]]) -> dict[str, tuple[int, int]]:
        for name, (correct, total) in v.items():
            if not 0 <= correct <= total:
                raise ValueError(f"{name}: {correct} correct of {total}")
        return v
