"""
Demonstration collection: run the scripted expert on sampled scenes, keep
only successful rollouts, write episodes and the dataset manifest.
"""

import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DatasetExists, DexGraspError, ExpertFailure
from ..perception.tracker import OracleTracker
from ..schema.config import SimConfig
from ..schema.manifest import DatasetManifest
from ..schema.observation import Episode
from ..schema.scene import SceneSpec
from ..storage.episode_io import episode_dir, list_episode_dirs, write_episode
from ..storage.manifest import compute_manifest, write_manifest
from .distribution import NONPREHENSILE_DISTRIBUTION, DEMO_DISTRIBUTION, SceneDistribution
from .expert import ScriptedExpert
from .world import TabletopSim

logger = logging.getLogger(__name__)

NONPREHENSILE_STEP_CAP = 200
MIN_ATTEMPTS_FOR_FLOOR = 20


@dataclass
class CollectionStats:
    attempts: int = 0
    successes: int = 0
    failures: int = 0
    errors: int = 0

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts if self.attempts else 1.0


def task_sim_config(config: SimConfig, task_kind: str) -> SimConfig:
    """Nonprehensile rollouts get NONPREHENSILE_STEP_CAP steps; grasps keep `max_steps`."""
    if task_kind == "nonprehensile":
        return config.model_copy(update={"max_steps": max(config.max_steps, NONPREHENSILE_STEP_CAP)})
    return config


def pick_target(scene: SceneSpec, task_kind: str, rng: np.random.Generator) -> str:
    if task_kind == "nonprehensile":
        candidates = [o.object_id for o in scene.objects if o.pushable]
    else:
        candidates = [o.object_id for o in scene.objects if o.graspable]
    if not candidates:
        raise ExpertFailure(f"Scene has no {task_kind} target")
    return candidates[int(rng.integers(len(candidates)))]


def record_expert_episode(
    scene: SceneSpec,
    target_id: str,
    task_kind: str,
    config: SimConfig,
    rng: np.random.Generator,
    noise_std: float = 0.01,
) -> tuple[Episode, bool]:
    """One expert rollout with per-step tracker masks.

    Grasp episodes always run exactly `max_steps` steps; nonprehensile ones
    stop at success or after NONPREHENSILE_STEP_CAP steps.
    """
    config = task_sim_config(config, task_kind)
    sim = TabletopSim(config)
    sim.reset(scene)
    tracker = OracleTracker(sim)
    mask = tracker.initialize(sim.gt_mask(target_id))

    expert = ScriptedExpert(target_id, task_kind, rng, noise_std)
    expert.begin(sim.state)
    observations, actions = [], []
    for _ in range(config.max_steps):
        observations.append(sim.observe(mask))
        action = expert.act(sim.state)
        actions.append(action)
        sim.step(action)
        mask = tracker.track(mask)
        if task_kind == "nonprehensile" and sim.success():
            break

    episode = Episode(
        observations=observations,
        actions=actions,
        scene_meta=scene,
        target_object_id=target_id,
        task_kind=task_kind,
    )
    return episode, sim.success()


def collect_demos(
    n: int,
    distribution: SceneDistribution | None = None,
    task_kind: str = "grasp",
    out_dir: str | Path = "data",
    seed: int = 0,
    config: SimConfig | None = None,
    success_floor: float = 0.5,
    progress=None,
    overwrite: bool = False,
) -> DatasetManifest:
    """Write `n` successful expert episodes under `out_dir` and return the manifest.

    Refuses to write over existing episodes unless `overwrite` is set, in which
    case the old `episodes/` directory is removed first.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if task_kind not in ("grasp", "nonprehensile"):
        raise ValueError(f"Unknown task kind: {task_kind}")
    existing = list_episode_dirs(out_dir)
    if existing and not overwrite:
        raise DatasetExists(f"{out_dir} already holds {len(existing)} episodes; pass overwrite to replace them")
    if existing:
        logger.info("removing %d existing episodes from %s", len(existing), out_dir)
        shutil.rmtree(Path(out_dir) / "episodes")
    config = config or SimConfig()
    if distribution is None:
        distribution = NONPREHENSILE_DISTRIBUTION if task_kind == "nonprehensile" else DEMO_DISTRIBUTION
    rng = np.random.default_rng(seed)
    stats = CollectionStats()

    while stats.successes < n:
        stats.attempts += 1
        try:
            scene = distribution.sample(rng, config)
            target = pick_target(scene, task_kind, rng)
            episode, ok = record_expert_episode(scene, target, task_kind, config, rng)
        except DexGraspError as e:
            stats.errors += 1
            logger.warning("attempt %d discarded: %s", stats.attempts, e)
            ok = False
        if ok:
            write_episode(episode_dir(out_dir, stats.successes), episode)
            stats.successes += 1
            if progress is not None:
                progress(stats.successes, episode)
        else:
            stats.failures += 1
        if stats.attempts >= MIN_ATTEMPTS_FOR_FLOOR and stats.success_rate < success_floor:
            raise ExpertFailure(
                f"Expert success rate {stats.success_rate:.2f} below floor {success_floor}",
                diagnostics=stats.__dict__ | {"distribution": distribution.name, "task_kind": task_kind},
            )

    logger.info("collected %d episodes in %d attempts", stats.successes, stats.attempts)
    manifest = compute_manifest(out_dir)
    write_manifest(out_dir, manifest)
    return manifest
