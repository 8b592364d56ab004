"""
Dataset manifest computation and persistence.
"""

import json
import logging
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, EmptyDataset
from ..schema.manifest import DatasetManifest
from .episode_io import list_episode_dirs, read_meta, read_streams

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest"


def compute_manifest(dataset_dir: str | Path, frame_rate: float = 20.0) -> DatasetManifest:
    """Per-dimension action and state statistics over every timestep of every episode."""
    dirs = list_episode_dirs(dataset_dir)
    if not dirs:
        raise EmptyDataset(f"No episodes under {dataset_dir}")

    actions, states, lengths = [], [], []
    resolution = None
    task_kinds = set()
    for d in dirs:
        streams = read_streams(d, memmap=True)
        action = np.asarray(streams["action"], dtype=np.float64)
        state = np.asarray(streams["state"], dtype=np.float64)
        if actions and action.shape[1] != actions[0].shape[1]:
            raise DimensionMismatch(f"{d.name}: D_a={action.shape[1]}, expected {actions[0].shape[1]}")
        if states and state.shape[1] != states[0].shape[1]:
            raise DimensionMismatch(f"{d.name}: D_s={state.shape[1]}, expected {states[0].shape[1]}")
        res = tuple(streams["head_rgb"].shape[1:3])
        if resolution is not None and res != resolution:
            raise DimensionMismatch(f"{d.name}: resolution {res}, expected {resolution}")
        resolution = res
        actions.append(action)
        states.append(state)
        lengths.append(action.shape[0])
        task_kinds.add(read_meta(d).get("task_kind", "grasp"))

    if len(task_kinds) != 1:
        raise DimensionMismatch(f"Mixed task kinds in one dataset: {sorted(task_kinds)}")

    a = np.concatenate(actions, axis=0)
    s = np.concatenate(states, axis=0)
    a_min, a_max = a.min(axis=0), a.max(axis=0)
    degenerate = [int(i) for i in np.flatnonzero(a_max == a_min)]
    if degenerate:
        logger.warning("DegenerateDim: constant action dims %s normalize to 0", degenerate)

    return DatasetManifest(
        episode_count=len(dirs),
        image_resolution=resolution,
        state_dim=s.shape[1],
        action_dim=a.shape[1],
        action_min=a_min.tolist(),
        action_max=a_max.tolist(),
        action_mean=a.mean(axis=0).tolist(),
        action_std=a.std(axis=0).tolist(),
        state_mean=s.mean(axis=0).tolist(),
        state_std=s.std(axis=0).tolist(),
        degenerate_dims=degenerate,
        frame_rate=frame_rate,
        task_kind=task_kinds.pop(),
        episode_lengths=lengths,
    )


def write_manifest(dataset_dir: str | Path, manifest: DatasetManifest) -> Path:
    path = Path(dataset_dir) / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2))
    return path


def load_manifest(dataset_dir: str | Path) -> DatasetManifest:
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    return DatasetManifest.model_validate(json.loads(path.read_text()))


def manifests_match(a: DatasetManifest, b: DatasetManifest, tol: float = 1e-6) -> bool:
    """Structural fields equal and every statistic within `tol`."""
    if (a.episode_count, a.state_dim, a.action_dim, a.task_kind) != (
        b.episode_count, b.state_dim, b.action_dim, b.task_kind
    ):
        return False
    for name in ("action_min", "action_max", "action_mean", "action_std", "state_mean", "state_std"):
        if not np.allclose(getattr(a, name), getattr(b, name), atol=tol, rtol=0.0):
            return False
    return True
