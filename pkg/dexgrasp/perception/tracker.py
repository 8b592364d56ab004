"""
Mask propagation across frames.
"""

import logging

import numpy as np
from pydantic import BaseModel, field_validator
from scipy import ndimage

from ..errors import TrackLost
from ..sim.render import BACKGROUND_ID, GRIPPER_ID
from ..sim.world import TabletopSim

logger = logging.getLogger(__name__)


class TrackerCorruption(BaseModel):
    """Perturbations applied to oracle masks for robustness studies."""

    dilate: int = 0
    erode: int = 0
    dropout: float = 0.0
    seed: int = 0

    @field_validator("dropout")
    @classmethod
    def validate_dropout(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"Dropout probability out of range: {v}")
        return v

    @property
    def enabled(self) -> bool:
        return bool(self.dilate or self.erode or self.dropout)

    def apply(self, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        m = mask[..., 0].astype(bool)
        if self.dilate:
            m = ndimage.binary_dilation(m, iterations=self.dilate)
        if self.erode:
            m = ndimage.binary_erosion(m, iterations=self.erode)
        if self.dropout:
            m &= rng.random(m.shape) >= self.dropout
        return m.astype(np.uint8)[..., None]


class OracleTracker:
    """Follows one object id through the simulator's id-buffer.

    The id is resolved once, from the first mask it is given. While the
    object is fully hidden the previous mask is returned; more than
    `max_occluded` hidden frames in a row raises TrackLost.
    """

    def __init__(self, sim: TabletopSim, max_occluded: int = 5, corruption: TrackerCorruption | None = None):
        self.sim = sim
        self.max_occluded = max_occluded
        self.corruption = corruption or TrackerCorruption()
        self.rng = np.random.default_rng(self.corruption.seed)
        self.object_index: int | None = None
        self.occluded = 0

    def initialize(self, mask: np.ndarray) -> np.ndarray:
        m = np.asarray(mask)[..., 0].astype(bool) if np.ndim(mask) == 3 else np.asarray(mask, dtype=bool)
        if not m.any():
            raise TrackLost("Cannot initialize tracking from an empty mask")
        ids = self.sim.id_buffer()
        candidates = ids[m]
        candidates = candidates[(candidates != BACKGROUND_ID) & (candidates != GRIPPER_ID)]
        if candidates.size == 0:
            raise TrackLost("Initial mask covers no object")
        values, counts = np.unique(candidates, return_counts=True)
        self.object_index = int(values[np.argmax(counts)])
        self.occluded = 0
        logger.debug("tracking object index %d", self.object_index)
        return self._current(mask)

    def track(self, prev_mask: np.ndarray, image: np.ndarray | None = None) -> np.ndarray:
        if self.object_index is None:
            return self.initialize(prev_mask)
        return self._current(prev_mask)

    def _current(self, prev_mask: np.ndarray) -> np.ndarray:
        ids = self.sim.id_buffer()
        mask = (ids == self.object_index).astype(np.uint8)[..., None]
        if not mask.any():
            self.occluded += 1
            if self.occluded > self.max_occluded:
                raise TrackLost(f"Object hidden for {self.occluded} consecutive frames")
            return np.asarray(prev_mask, dtype=np.uint8).reshape(mask.shape)
        self.occluded = 0
        if self.corruption.enabled:
            mask = self.corruption.apply(mask, self.rng)
        return mask
