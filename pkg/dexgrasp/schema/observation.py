"""
Schemas for per-timestep observations, actions, chunks and episodes.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..errors import InvalidBBox


class BBox(BaseModel):
    """Axis-aligned pixel box, top-left inclusive, bottom-right exclusive."""

    model_config = ConfigDict(frozen=True)

    x1: int
    y1: int
    x2: int
    y2: int

    @model_validator(mode="after")
    def check_order(self) -> "BBox":
        """Ensure the box has positive extent and non-negative origin."""
        if self.x1 < 0 or self.y1 < 0:
            raise ValueError(f"Negative bbox origin: {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"Empty or inverted bbox: {self}")
        return self

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def check_within(self, width: int, height: int) -> "BBox":
        """Raise InvalidBBox unless the box lies inside a width×height image."""
        if self.x2 > width or self.y2 > height:
            raise InvalidBBox(f"{self} exceeds image bounds {width}x{height}")
        return self

    def to_mask(self, height: int, width: int) -> np.ndarray:
        """Binary H×W mask of the box interior."""
        mask = np.zeros((height, width), dtype=bool)
        mask[self.y1:self.y2, self.x1:self.x2] = True
        return mask

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "BBox | None":
        """Tight bound of the nonzero pixels of a 2-D (or H×W×1) mask."""
        mask = np.asarray(mask)
        if mask.ndim == 3:
            mask = mask[..., 0]
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            return None
        return cls(x1=int(cols[0]), y1=int(rows[0]), x2=int(cols[-1]) + 1, y2=int(rows[-1]) + 1)


class Observation(BaseModel):
    """One timestep of sensor data: head and wrist RGB, proprioception, mask."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    head_rgb: np.ndarray
    wrist_rgb: np.ndarray
    proprio: np.ndarray
    mask: np.ndarray

    @field_validator("head_rgb", "wrist_rgb")
    @classmethod
    def validate_image(cls, v: np.ndarray) -> np.ndarray:
        """Images are H×W×3 uint8."""
        v = np.asarray(v)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"Expected H×W×3 image, got shape {v.shape}")
        if v.dtype != np.uint8:
            raise ValueError(f"Expected uint8 image, got {v.dtype}")
        return v

    @field_validator("proprio")
    @classmethod
    def validate_proprio(cls, v: np.ndarray) -> np.ndarray:
        """Proprioception is a finite float vector."""
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 1:
            raise ValueError(f"Proprio must be a vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("Proprio contains non-finite values")
        return v

    @field_validator("mask")
    @classmethod
    def validate_mask(cls, v: np.ndarray) -> np.ndarray:
        """Mask is H×W×1 with values in {0, 1}."""
        v = np.asarray(v)
        if v.ndim == 2:
            v = v[..., None]
        if v.ndim != 3 or v.shape[2] != 1:
            raise ValueError(f"Expected H×W×1 mask, got shape {v.shape}")
        v = v.astype(np.uint8)
        if v.size and v.max() > 1:
            raise ValueError("Mask values must be 0 or 1")
        return v

    @model_validator(mode="after")
    def check_resolution(self) -> "Observation":
        """All images share one resolution."""
        shapes = {self.head_rgb.shape[:2], self.wrist_rgb.shape[:2], self.mask.shape[:2]}
        if len(shapes) != 1:
            raise ValueError(f"Image resolutions differ: {sorted(shapes)}")
        return self

    @property
    def resolution(self) -> tuple[int, int]:
        return self.head_rgb.shape[0], self.head_rgb.shape[1]


class Action(BaseModel):
    """Target joint positions (desk: gripper x, y, z, aperture)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    target: np.ndarray

    @field_validator("target")
    @classmethod
    def validate_target(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError(f"Action must be a finite vector, got {v}")
        return v


class ActionChunk(BaseModel):
    """H consecutive actions predicted or consumed together."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    actions: np.ndarray
    start_step: int = 0

    @field_validator("actions")
    @classmethod
    def validate_actions(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 2:
            raise ValueError(f"Chunk must be H×D_a, got shape {v.shape}")
        return v

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def action(self, i: int) -> Action:
        return Action(target=self.actions[i])


class Episode(BaseModel):
    """A demonstration: aligned observation/action sequences plus scene metadata."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    observations: list[Observation]
    actions: list[Action]
    scene_meta: "SceneSpec"
    target_object_id: str
    task_kind: str = "grasp"

    @model_validator(mode="after")
    def check_lengths(self) -> "Episode":
        if len(self.observations) != len(self.actions):
            raise ValueError(
                f"Episode has {len(self.observations)} observations but {len(self.actions)} actions"
            )
        if not self.observations:
            raise ValueError("Episode is empty")
        return self

    @property
    def length(self) -> int:
        return len(self.actions)

    def stacked(self) -> dict[str, np.ndarray]:
        """Stream arrays in on-disk layout."""
        return {
            "head_rgb": np.stack([o.head_rgb for o in self.observations]),
            "wrist_rgb": np.stack([o.wrist_rgb for o in self.observations]),
            "mask": np.stack([o.mask for o in self.observations]),
            "state": np.stack([o.proprio for o in self.observations]).astype(np.float32),
            "action": np.stack([a.target for a in self.actions]).astype(np.float32),
        }


from .scene import SceneSpec  # noqa: E402

Episode.model_rebuild()
