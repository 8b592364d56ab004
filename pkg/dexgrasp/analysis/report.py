"""
Attention consistency across scene conditions.

The same scene is rendered under several background/lighting variants; for
each variant the policy samples one chunk with attention recording on. The
report gives the attention mass inside the target's ground-truth mask, the
mask's area fraction, and pairwise correlation of the patch maps.
"""

import itertools
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel

from ..schema.config import SimConfig
from ..schema.scene import BackgroundSpec, LightingSpec, SceneSpec
from ..sim.world import TabletopSim
from .attention_maps import AttentionRecorder, aggregate_attention
from .overlay import overlay_attention, save_panel

logger = logging.getLogger(__name__)


class SceneVariant(BaseModel):
    label: str
    background: BackgroundSpec = BackgroundSpec()
    lighting: LightingSpec = LightingSpec()

    def apply(self, scene: SceneSpec) -> SceneSpec:
        return scene.model_copy(update={"background": self.background, "lighting": self.lighting})


DEFAULT_VARIANTS = [
    SceneVariant(label="white"),
    SceneVariant(label="dim", lighting=LightingSpec(kind="dim")),
    SceneVariant(label="disco", lighting=LightingSpec(kind="disco")),
    SceneVariant(label="checker", background=BackgroundSpec(kind="checker")),
]


class ConditionAttention(BaseModel):
    label: str
    mass_in_mask: float
    mask_fraction: float

    @property
    def ratio(self) -> float:
        return self.mass_in_mask / self.mask_fraction if self.mask_fraction > 0 else float("nan")


class ConsistencyReport(BaseModel):
    target_object_id: str
    conditions: list[ConditionAttention]
    correlations: dict[str, float] = {}

    @property
    def min_ratio(self) -> float:
        return min(c.ratio for c in self.conditions)

    @property
    def min_correlation(self) -> float:
        return min(self.correlations.values()) if self.correlations else float("nan")


def attention_mass(image_map: np.ndarray, mask: np.ndarray) -> float:
    """Share of the (renormalized) map falling inside a binary mask."""
    m = np.asarray(mask).reshape(np.asarray(image_map).shape).astype(bool)
    total = float(np.sum(image_map))
    return float(np.sum(np.asarray(image_map)[m]) / total) if total > 0 else 0.0


def map_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    if a.std() == 0 or b.std() == 0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float(np.corrcoef(a, b)[0, 1])


def consistency_from_maps(target_object_id: str, patch_maps: dict[str, np.ndarray],
                          image_maps: dict[str, np.ndarray], masks: dict[str, np.ndarray]) -> ConsistencyReport:
    conditions = [
        ConditionAttention(
            label=label,
            mass_in_mask=attention_mass(image_maps[label], masks[label]),
            mask_fraction=float(np.mean(np.asarray(masks[label]) > 0)),
        )
        for label in patch_maps
    ]
    correlations = {
        f"{a}|{b}": map_correlation(patch_maps[a], patch_maps[b])
        for a, b in itertools.combinations(patch_maps, 2)
    }
    return ConsistencyReport(target_object_id=target_object_id, conditions=conditions, correlations=correlations)


def attention_consistency_report(
    policy,
    scene: SceneSpec,
    target_object_id: str,
    variants: list[SceneVariant] | None = None,
    sim_config: SimConfig | None = None,
    seed: int = 0,
    out_dir: str | Path | None = None,
    gain: float = 2.0,
) -> ConsistencyReport:
    """Record and compare attention for each variant; optionally write JSON, CSV and PNGs."""
    variants = variants or DEFAULT_VARIANTS
    patch_maps, image_maps, masks, panels = {}, {}, {}, []
    for variant in variants:
        sim = TabletopSim(sim_config)
        sim.reset(variant.apply(scene))
        mask = sim.gt_mask(target_object_id)
        obs = sim.observe(mask=mask)
        generator = torch.Generator().manual_seed(seed)
        with AttentionRecorder(policy) as recorder:
            policy.predict_chunk(obs, generator, on_step=recorder.on_step)
        patch_map, image_map = aggregate_attention(recorder.record(), obs.resolution[0])
        patch_maps[variant.label], image_maps[variant.label], masks[variant.label] = patch_map, image_map, mask
        panels.append((variant.label, overlay_attention(obs.head_rgb, np.clip(image_map, 0, None), gain)))
        logger.debug("variant %s: peak patch %.4f", variant.label, patch_map.max())

    report = consistency_from_maps(target_object_id, patch_maps, image_maps, masks)
    if out_dir is not None:
        write_consistency_report(out_dir, report, panels)
    return report


def write_consistency_report(out_dir: str | Path, report: ConsistencyReport,
                             panels: list[tuple[str, np.ndarray]] | None = None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"json": out_dir / "attention_consistency.json", "csv": out_dir / "attention_consistency.csv"}
    with open(paths["json"], "w") as f:
        json.dump(report.model_dump(mode="json"), f, indent=2)
    pd.DataFrame([{**c.model_dump(), "ratio": c.ratio} for c in report.conditions]).to_csv(paths["csv"], index=False)
    if panels:
        paths["png"] = save_panel(out_dir / "attention_overlays.png", panels,
                                  title=f"cross-attention, target {report.target_object_id}")
    return paths
