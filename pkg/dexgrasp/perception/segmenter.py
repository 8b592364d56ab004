"""
Bounding box → binary mask.
"""

import logging

import numpy as np

from ..errors import NoObjectInBox
from ..schema.observation import BBox
from ..sim.render import BACKGROUND_ID, GRIPPER_ID
from ..sim.world import TabletopSim

logger = logging.getLogger(__name__)


def best_iou_index(ids: np.ndarray, bbox: BBox) -> tuple[int, float]:
    """Object index whose visible mask has the highest IoU with the box interior."""
    box = bbox.to_mask(*ids.shape)
    best, best_iou = None, 0.0
    for index in np.unique(ids[box]):
        if index in (BACKGROUND_ID, GRIPPER_ID):
            continue
        obj = ids == index
        inter = np.count_nonzero(obj & box)
        iou = inter / np.count_nonzero(obj | box)
        if iou > best_iou:
            best, best_iou = int(index), iou
    if best is None:
        raise NoObjectInBox(f"No object intersects {bbox.as_list()}")
    return best, best_iou


class OracleSegmenter:
    """Returns the ground-truth mask of the object best explained by the box."""

    def __init__(self, sim: TabletopSim):
        self.sim = sim

    def segment(self, image: np.ndarray, bbox: BBox) -> np.ndarray:
        ids = self.sim.id_buffer()
        bbox.check_within(ids.shape[1], ids.shape[0])
        index, iou = best_iou_index(ids, bbox)
        logger.debug("segment %s → object %d (IoU %.3f)", bbox.as_list(), index, iou)
        return (ids == index).astype(np.uint8)[..., None]
