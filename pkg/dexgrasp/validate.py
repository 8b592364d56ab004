"""
Validation utilities for cross-checking recorded demonstration datasets.

Usage:
    python -m dexgrasp.validate summary data/
    python -m dexgrasp.validate manifest data/
    python -m dexgrasp.validate spot-check 12 data/
    python -m dexgrasp.validate anomalies data/
"""

import argparse
from collections import Counter
from pathlib import Path

import numpy as np

from .errors import DexGraspError
from .schema.config import SimConfig
from .sim.world import TabletopSim
from .storage.episode_io import list_episode_dirs, read_episode, read_meta, read_streams
from .storage.manifest import compute_manifest, load_manifest, manifests_match


def summary_stats(dataset_dir: Path):
    """Print episode counts, lengths and targets for a dataset."""
    print(f"\n{'='*60}")
    print(f"Summary Statistics - {dataset_dir}")
    print(f"{'='*60}\n")

    dirs = list_episode_dirs(dataset_dir)
    if not dirs:
        print("ERROR: no episodes found")
        return

    lengths = []
    kinds = Counter()
    shapes = Counter()
    for d in dirs:
        meta = read_meta(d)
        lengths.append(meta["length"])
        kinds[meta.get("task_kind", "grasp")] += 1
        target = next((o for o in meta["scene"]["objects"] if o["object_id"] == meta["target_object_id"]), None)
        if target is not None:
            shapes[target["shape"]] += 1

    print(f"Episodes: {len(dirs)}")
    print(f"Task kinds: {dict(kinds)}")
    print(f"Length: min {min(lengths)}, mean {np.mean(lengths):.1f}, max {max(lengths)}")
    print(f"Target shapes: {dict(sorted(shapes.items()))}")
    print()


def check_manifest(dataset_dir: Path) -> bool:
    """Recompute the manifest from the episodes and compare it to the stored one."""
    print(f"\n{'='*60}")
    print("Manifest Check")
    print(f"{'='*60}\n")

    try:
        stored = load_manifest(dataset_dir)
    except FileNotFoundError as e:
        print(f"ERROR: {e}")
        return False
    recomputed = compute_manifest(dataset_dir, stored.frame_rate)

    ok = manifests_match(stored, recomputed)
    print(f"Stored episodes:     {stored.episode_count}")
    print(f"Recomputed episodes: {recomputed.episode_count}")
    if stored.degenerate_dims:
        print(f"Degenerate action dims: {stored.degenerate_dims}")
    if not ok:
        for name in ("action_min", "action_max", "action_mean", "action_std", "state_mean", "state_std"):
            a, b = np.asarray(getattr(stored, name)), np.asarray(getattr(recomputed, name))
            if a.shape != b.shape:
                print(f"  {name}: shape {a.shape} vs {b.shape}")
            elif not np.allclose(a, b, atol=1e-6, rtol=0.0):
                print(f"  {name}: max difference {np.abs(a - b).max():.3e}")
    print(f"\nManifest {'matches' if ok else 'DOES NOT match'} the episodes.")
    print()
    return ok


def spot_check_episode(dataset_dir: Path, index: int, config: SimConfig | None = None):
    """Replay one episode's actions in a fresh simulator and compare frames."""
    print(f"\n{'='*60}")
    print(f"Spot Check: episode {index}")
    print(f"{'='*60}\n")

    dirs = list_episode_dirs(dataset_dir)
    if not 0 <= index < len(dirs):
        print(f"Episode {index} not found ({len(dirs)} episodes).")
        return

    episode = read_episode(dirs[index])
    scene = episode.scene_meta
    print(f"Directory: {dirs[index]}")
    print(f"Target: {episode.target_object_id} ({scene.object(episode.target_object_id).describe()})")
    print(f"Background: {scene.background.kind.value}, lighting: {scene.lighting.kind.value}")
    print(f"Length: {episode.length}")

    config = config or SimConfig(image_size=episode.observations[0].head_rgb.shape[0])
    sim = TabletopSim(config)
    sim.reset(scene)
    mismatched = []
    for t, action in enumerate(episode.actions):
        if not np.array_equal(sim.observe().head_rgb, episode.observations[t].head_rgb):
            mismatched.append(t)
        sim.step(action)

    if mismatched:
        print(f"Replay diverges at {len(mismatched)} steps, first at t={mismatched[0]}")
    else:
        print("Replay reproduces every recorded head frame.")
    print(f"Replay ends in success: {sim.success()}")
    print()


def find_anomalies(dataset_dir: Path):
    """Find potential data quality issues."""
    print(f"\n{'='*60}")
    print("Anomaly Detection")
    print(f"{'='*60}\n")

    issues = []
    dirs = list_episode_dirs(dataset_dir)
    lengths = []
    for d in dirs:
        try:
            streams = read_streams(d, memmap=True)
        except DexGraspError as e:
            issues.append(f"{d.name}: {e}")
            continue
        lengths.append((d.name, streams["action"].shape[0]))

        # Target mask must be visible in the first frame
        if not np.asarray(streams["mask"][0]).any():
            issues.append(f"{d.name}: empty target mask at t=0")
        if not np.isfinite(np.asarray(streams["action"])).all():
            issues.append(f"{d.name}: non-finite actions")

    if lengths:
        avg = sum(n for _, n in lengths) / len(lengths)
        long_ones = [(name, n) for name, n in lengths if n > avg * 3]
        if long_ones:
            issues.append(f"Long episodes (>3x average of {avg:.1f}):")
            for name, n in sorted(long_ones, key=lambda x: -x[1])[:5]:
                issues.append(f"  {name}: {n} steps")

    if issues:
        print("Potential issues found:")
        for issue in issues[:30]:
            print(f"  - {issue}")
        if len(issues) > 30:
            print(f"  ... and {len(issues) - 30} more")
    else:
        print("No anomalies detected.")
    print()


def main():
    parser = argparse.ArgumentParser(description="Validate recorded demonstration datasets")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("summary", help="Episode counts and lengths")
    p.add_argument("dataset_dir", type=Path)

    p = subparsers.add_parser("manifest", help="Recompute and compare the manifest")
    p.add_argument("dataset_dir", type=Path)

    p = subparsers.add_parser("spot-check", help="Replay one episode")
    p.add_argument("index", type=int)
    p.add_argument("dataset_dir", type=Path)

    p = subparsers.add_parser("anomalies", help="Find data quality issues")
    p.add_argument("dataset_dir", type=Path)

    args = parser.parse_args()

    if args.command == "summary":
        summary_stats(args.dataset_dir)
    elif args.command == "manifest":
        if not check_manifest(args.dataset_dir):
            raise SystemExit(1)
    elif args.command == "spot-check":
        spot_check_episode(args.dataset_dir, args.index)
    elif args.command == "anomalies":
        find_anomalies(args.dataset_dir)


if __name__ == "__main__":
    main()
