"""
Episode directories: a JSON `meta` file plus one tensor file per stream.

    episodes/ep_NNNNNN/{meta, head_rgb.dgt, wrist_rgb.dgt, mask.dgt, state.dgt, action.dgt}
"""

import json
from pathlib import Path

import numpy as np

from ..errors import MissingStream, StreamShapeMismatch
from ..schema.observation import Action, Episode, Observation
from ..schema.scene import SceneSpec
from .tensor_file import open_tensor_memmap, read_tensor, write_tensor

STREAMS: dict[str, str] = {
    "head_rgb": "u8",
    "wrist_rgb": "u8",
    "mask": "u8",
    "state": "f32",
    "action": "f32",
}


def episode_dir(dataset_dir: str | Path, index: int) -> Path:
    return Path(dataset_dir) / "episodes" / f"ep_{index:06d}"


def list_episode_dirs(dataset_dir: str | Path) -> list[Path]:
    root = Path(dataset_dir) / "episodes"
    if not root.exists():
        return []
    return sorted(p for p in root.glob("ep_*") if p.is_dir())


def write_episode(directory: str | Path, episode: Episode) -> None:
    """Write an episode's meta and streams into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    streams = episode.stacked()
    _check_streams(streams)

    for name, dtype in STREAMS.items():
        arr = streams[name]
        write_tensor(directory / f"{name}.dgt", dtype, arr.shape, arr)

    meta = {
        "target_object_id": episode.target_object_id,
        "task_kind": episode.task_kind,
        "length": episode.length,
        "scene": episode.scene_meta.model_dump(mode="json"),
    }
    with open(directory / "meta", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def read_meta(directory: str | Path) -> dict:
    meta_path = Path(directory) / "meta"
    if not meta_path.exists():
        raise MissingStream("meta")
    with open(meta_path) as f:
        return json.load(f)


def read_streams(directory: str | Path, memmap: bool = False) -> dict[str, np.ndarray]:
    """Load every stream array; memmap=True maps payloads instead of reading them."""
    directory = Path(directory)
    streams = {}
    for name in STREAMS:
        path = directory / f"{name}.dgt"
        if not path.exists():
            raise MissingStream(name)
        if memmap:
            streams[name] = open_tensor_memmap(path)
        else:
            _, _, streams[name] = read_tensor(path)
    _check_streams(streams)
    return streams


def read_episode(directory: str | Path) -> Episode:
    """Exact inverse of write_episode."""
    meta = read_meta(directory)
    streams = read_streams(directory)
    length = streams["action"].shape[0]
    if meta.get("length") != length:
        raise StreamShapeMismatch(f"meta length {meta.get('length')} != stream length {length}")

    observations = [
        Observation(
            head_rgb=streams["head_rgb"][t],
            wrist_rgb=streams["wrist_rgb"][t],
            proprio=streams["state"][t],
            mask=streams["mask"][t],
        )
        for t in range(length)
    ]
    actions = [Action(target=streams["action"][t]) for t in range(length)]
    return Episode(
        observations=observations,
        actions=actions,
        scene_meta=SceneSpec.model_validate(meta["scene"]),
        target_object_id=meta["target_object_id"],
        task_kind=meta.get("task_kind", "grasp"),
    )


def _check_streams(streams: dict[str, np.ndarray]) -> None:
    """All streams agree on T and the image streams on resolution."""
    lengths = {name: arr.shape[0] for name, arr in streams.items()}
    if len(set(lengths.values())) != 1:
        raise StreamShapeMismatch(f"Stream lengths differ: {lengths}")
    head, wrist, mask = streams["head_rgb"], streams["wrist_rgb"], streams["mask"]
    if head.ndim != 4 or head.shape[-1] != 3 or wrist.shape != head.shape:
        raise StreamShapeMismatch(f"Image streams disagree: head {head.shape}, wrist {wrist.shape}")
    if mask.shape != head.shape[:3] + (1,):
        raise StreamShapeMismatch(f"Mask shape {mask.shape} does not match head {head.shape}")
    if streams["state"].ndim != 2 or streams["action"].ndim != 2:
        raise StreamShapeMismatch("state and action streams must be [T, D]")
