"""
Schema for dataset manifests (normalization statistics and stream metadata).
"""

import numpy as np
from pydantic import BaseModel, model_validator


class DatasetManifest(BaseModel):
    """Summary of a demonstration dataset, written next to its episodes."""

    episode_count: int
    image_resolution: tuple[int, int]
    state_dim: int
    action_dim: int
    action_min: list[float]
    action_max: list[float]
    action_mean: list[float]
    action_std: list[float]
    state_mean: list[float]
    state_std: list[float]
    degenerate_dims: list[int] = []
    frame_rate: float = 20.0
    task_kind: str = "grasp"
    episode_lengths: list[int] = []

    @model_validator(mode="after")
    def check_dims(self) -> "DatasetManifest":
        """Per-dimension stats match the declared dimensions; min ≤ max."""
        for name in ("action_min", "action_max", "action_mean", "action_std"):
            if len(getattr(self, name)) != self.action_dim:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {self.action_dim}")
        for name in ("state_mean", "state_std"):
            if len(getattr(self, name)) != self.state_dim:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {self.state_dim}")
        for i, (lo, hi) in enumerate(zip(self.action_min, self.action_max)):
            if lo > hi:
                raise ValueError(f"action_min > action_max in dim {i}")
            if lo == hi and i not in self.degenerate_dims:
                raise ValueError(f"Constant action dim {i} not flagged degenerate")
        if self.task_kind not in ("grasp", "nonprehensile"):
            raise ValueError(f"Unknown task kind: {self.task_kind}")
        return self

    def normalize_actions(self, actions: np.ndarray) -> np.ndarray:
        """Map action units to [-1, 1] per dimension; degenerate dims map to 0."""
        lo = np.asarray(self.action_min, dtype=np.float64)
        hi = np.asarray(self.action_max, dtype=np.float64)
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        out = 2.0 * (np.asarray(actions, dtype=np.float64) - lo) / safe - 1.0
        return np.where(span > 0, out, 0.0)

    def denormalize_actions(self, normalized: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.action_min, dtype=np.float64)
        hi = np.asarray(self.action_max, dtype=np.float64)
        return lo + (np.asarray(normalized, dtype=np.float64) + 1.0) * 0.5 * (hi - lo)

    def standardize_state(self, state: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.state_mean, dtype=np.float64)
        std = np.asarray(self.state_std, dtype=np.float64)
        safe = np.where(std > 0, std, 1.0)
        return np.where(std > 0, (np.asarray(state, dtype=np.float64) - mean) / safe, 0.0)
