"""
(observation, action chunk) pairs sliced from recorded episodes.

Every timestep of every episode starts one sample (stride 1). Chunks that
run past the end of an episode repeat the final action. Streams are
memory-mapped, so a dataset holds only the index in memory.
"""

import hashlib
import logging
import math
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset, Sampler

from ..errors import DimensionMismatch, EmptyDataset
from ..schema.config import JitterParams
from ..schema.manifest import DatasetManifest
from ..storage.episode_io import list_episode_dirs, read_streams
from ..storage.manifest import load_manifest
from .augment import apply_factors, sample_factors

logger = logging.getLogger(__name__)


def chunk_actions(actions: np.ndarray, start: int, horizon: int) -> np.ndarray:
    """actions[start : start + horizon], padded by repeating the last row."""
    actions = np.asarray(actions)
    window = actions[start:start + horizon]
    if len(window) < horizon:
        pad = np.repeat(actions[-1:], horizon - len(window), axis=0)
        window = np.concatenate([window, pad], axis=0)
    return window


def worker_seed(base_seed: int, worker_id: int) -> int:
    """Deterministic 32-bit seed derived from (base seed, worker id)."""
    digest = hashlib.sha256(f"{base_seed}:{worker_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


class ChunkDataset(Dataset):
    """Index over (episode, t); items are normalized training tensors."""

    def __init__(
        self,
        dataset_dir: str | Path,
        horizon: int,
        jitter: JitterParams | None = None,
        seed: int = 0,
        manifest: DatasetManifest | None = None,
    ):
        self.dataset_dir = Path(dataset_dir)
        self.horizon = horizon
        self.jitter = jitter
        self.seed = seed
        self.epoch = 0
        self.manifest = manifest or load_manifest(dataset_dir)
        self.episodes = [read_streams(d, memmap=True) for d in list_episode_dirs(dataset_dir)]
        if not self.episodes:
            raise EmptyDataset(f"No episodes under {dataset_dir}")
        for i, streams in enumerate(self.episodes):
            if streams["action"].shape[1] != self.manifest.action_dim:
                raise DimensionMismatch(f"episode {i}: D_a={streams['action'].shape[1]}, manifest {self.manifest.action_dim}")
            if streams["state"].shape[1] != self.manifest.state_dim:
                raise DimensionMismatch(f"episode {i}: D_s={streams['state'].shape[1]}, manifest {self.manifest.state_dim}")
        self.index = [(e, t) for e, streams in enumerate(self.episodes) for t in range(streams["action"].shape[0])]
        logger.info("dataset %s: %d episodes, %d samples", self.dataset_dir, len(self.episodes), len(self.index))

    def __len__(self) -> int:
        return len(self.index)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def _jitter(self, idx: int, head: np.ndarray, wrist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.jitter is None:
            return head, wrist
        rng = np.random.default_rng([self.seed, self.epoch, idx])
        factors = sample_factors(rng, self.jitter)
        return apply_factors(head, factors), apply_factors(wrist, factors)

    def __getitem__(self, idx: int) -> dict[str, torch.Tensor]:
        e, t = self.index[idx]
        streams = self.episodes[e]
        head = np.array(streams["head_rgb"][t])
        wrist = np.array(streams["wrist_rgb"][t])
        head, wrist = self._jitter(idx, head, wrist)
        state = self.manifest.standardize_state(np.asarray(streams["state"][t], dtype=np.float64))
        chunk = chunk_actions(streams["action"], t, self.horizon)
        action = self.manifest.normalize_actions(chunk)
        return {
            "head_rgb": torch.from_numpy(np.ascontiguousarray(head)),
            "wrist_rgb": torch.from_numpy(np.ascontiguousarray(wrist)),
            "mask": torch.from_numpy(np.array(streams["mask"][t])),
            "state": torch.from_numpy(state.astype(np.float32)),
            "action": torch.from_numpy(action.astype(np.float32)),
        }


class EpochBatchSampler(Sampler):
    """Seeded per-epoch shuffle in fixed-size batches, resumable mid-epoch."""

    def __init__(self, size: int, batch_size: int, seed: int):
        self.size = size
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = 0
        self.offset = 0

    def set_epoch(self, epoch: int, offset: int = 0) -> None:
        self.epoch = epoch
        self.offset = offset

    def batches(self) -> list[list[int]]:
        order = np.random.default_rng([self.seed, self.epoch]).permutation(self.size)
        return [order[i:i + self.batch_size].tolist() for i in range(0, self.size, self.batch_size)]

    def __iter__(self):
        yield from self.batches()[self.offset:]

    def __len__(self) -> int:
        return math.ceil(self.size / self.batch_size) - self.offset
