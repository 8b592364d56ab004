"""
Cross-attention recording and aggregation.

While the policy samples one chunk, every DiT cross-attention layer reports
its softmax weights (action tokens × condition tokens) per diffusion step.
The aggregate keeps only the head-image columns, sums over steps, layers,
heads and action tokens, and normalizes to a distribution over patches.
"""

import logging

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, model_validator

from ..errors import RecordingAbsent

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-5


class AttentionRecord(BaseModel):
    """weights[step, layer, head, action_token, condition_token]."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: np.ndarray
    head_columns: tuple[int, int]
    grid: tuple[int, int]

    @model_validator(mode="after")
    def check_weights(self) -> "AttentionRecord":
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 5:
            raise ValueError(f"Expected [steps, layers, heads, Lq, Lk] weights, got shape {w.shape}")
        start, stop = self.head_columns
        if stop - start != self.grid[0] * self.grid[1] or stop > w.shape[-1]:
            raise ValueError(f"Head columns {self.head_columns} do not match grid {self.grid}")
        if w.size and np.abs(w.sum(axis=-1) - 1.0).max() > ROW_SUM_TOL:
            raise ValueError("Attention rows do not sum to 1")
        self.weights = w
        return self


class AttentionRecorder:
    """Captures cross-attention of one policy while a chunk is sampled.

    Usage:
        with AttentionRecorder(policy) as recorder:
            policy.predict_chunk(observation, generator, on_step=recorder.on_step)
        record = recorder.record()
    """

    def __init__(self, policy, batch_index: int = 0):
        self.policy = policy
        self.batch_index = batch_index
        self.step = 0
        self.captured: dict[tuple[int, int], np.ndarray] = {}

    def on_step(self, i: int, k: int) -> None:
        self.step = i

    def _hook(self, layer: int):
        def capture(weights: torch.Tensor) -> None:
            self.captured[(self.step, layer)] = weights[self.batch_index].double().cpu().numpy()
        return capture

    def __enter__(self) -> "AttentionRecorder":
        self.captured.clear()
        self.policy.denoiser.set_cross_attention_hook(self._hook)
        return self

    def __exit__(self, *exc) -> None:
        self.policy.denoiser.set_cross_attention_hook(None)

    def record(self) -> AttentionRecord:
        if not self.captured:
            raise RecordingAbsent("No cross-attention was captured")
        steps = sorted({s for s, _ in self.captured})
        layers = sorted({l for _, l in self.captured})
        weights = np.stack([np.stack([self.captured[(s, l)] for l in layers]) for s in steps])
        config = self.policy.config
        side = self.policy.image_side // config.head_encoder.patch_side
        n_head = side * side
        # condition layout: [proprio, head patches, wrist patches, step token]
        return AttentionRecord(weights=weights, head_columns=(1, 1 + n_head), grid=(side, side))


def aggregate_attention(record: AttentionRecord | None, image_side: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(patch map [rows, cols] summing to 1, bilinear upsample to image_side²)."""
    if record is None or record.weights.size == 0:
        raise RecordingAbsent("Attention recording is absent")
    start, stop = record.head_columns
    mass = record.weights[..., start:stop].sum(axis=(0, 1, 2, 3))
    total = mass.sum()
    if total <= 0:
        raise RecordingAbsent("Recorded attention places no mass on head patches")
    patch_map = (mass / total).reshape(record.grid)
    if image_side is None:
        return patch_map, patch_map
    image_map = F.interpolate(
        torch.from_numpy(patch_map)[None, None], size=(image_side, image_side), mode="bilinear", align_corners=False
    )[0, 0].numpy()
    return patch_map, image_map
