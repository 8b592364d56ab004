"""
Main CLI for dexgrasp - hierarchical grasping on a desk-scale simulator.

Usage:
    python -m dexgrasp.main collect --n 300 --task grasp --seed 7 --out data/
    python -m dexgrasp.main train --config cfgs/desk.cfg --data data/ --out ckpt/
    python -m dexgrasp.main eval --suite suites/unseen_lighting --ckpt ckpt/checkpoint --k 3 --out out/
    python -m dexgrasp.main run --prompt "clear the table" --expert --out out/run
    python -m dexgrasp.main analyze attention --ckpt ckpt/checkpoint --out out/
    python -m dexgrasp.main analyze features --scene-seed 3 --out out/
    python -m dexgrasp.main bench schedule
    python -m dexgrasp.main bench assignment --instances 1000
"""

import argparse
import itertools
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analysis.features import pca_feature_viz, to_uint8
from .analysis.overlay import save_panel
from .analysis.report import attention_consistency_report
from .config import RunConfig, load_run_config, write_resolved_config
from .controller.checkpoint import load_checkpoint
from .controller.rollout import ExpertController, PolicyController
from .controller.schedule import build_schedule
from .errors import DexGraspError
from .eval.gates import evaluate_gates
from .eval.harness import format_table, load_results, run_suite, success_table, trial_counts, trial_seed, write_report
from .eval.long_horizon import run_long_horizon, summarize, write_long_horizon_report
from .eval.suites import load_suite
from .planner.backends import build_backend
from .planner.machine import RunLimits, run_prompt
from .schema.scene import Lighting
from .sim.collect import NONPREHENSILE_STEP_CAP, collect_demos, pick_target, task_sim_config
from .sim.distribution import DEMO_DISTRIBUTION, SceneDistribution
from .sim.world import TabletopSim
from .training.immiscible import assignment_cost, immiscible_assign
from .training.trainer import train

logger = logging.getLogger("dexgrasp")


def banner(title: str) -> None:
    print(f"\n{'='*60}")
    print(title)
    print(f"{'='*60}")


def resolve(args) -> RunConfig:
    return load_run_config(getattr(args, "config", None), getattr(args, "set", None) or [])


# --- controllers and backends ------------------------------------------------

def controller_factory(args, config: RunConfig, task_kind: str):
    """seed → GraspController; the checkpoint is loaded once and shared read-only."""
    if args.expert:
        return lambda seed: ExpertController(task_kind, seed)
    policy = load_checkpoint(args.ckpt, config.training.device)
    policy.eval()
    execute_steps = policy.config.execute_steps
    budget = policy.config.chunk_budget
    if task_kind == "nonprehensile":
        budget = max(budget, math.ceil(NONPREHENSILE_STEP_CAP / execute_steps))
    return lambda seed: PolicyController(policy, budget, execute_steps, seed, config.perception.max_occluded_frames)


def backend_factory(config: RunConfig):
    return lambda sim: build_backend(config.planner, sim)


# --- subcommands -------------------------------------------------------------

def cmd_collect(args) -> int:
    config = resolve(args)
    write_resolved_config(args.out, config, "collect", {"n": args.n, "task": args.task, "seed": args.seed})
    banner(f"Collecting {args.n} {args.task} demonstrations")

    def progress(count: int, episode) -> None:
        print(f"  [{count:4d}/{args.n}] target {episode.target_object_id:6s} T={episode.length}")

    try:
        manifest = collect_demos(args.n, None, args.task, args.out, args.seed, config.sim, args.success_floor,
                                 progress, args.overwrite)
    except DexGraspError as e:
        print(f"  ERROR: {e}")
        return 1
    print(f"\nEpisodes: {manifest.episode_count}")
    print(f"Manifest: {Path(args.out) / 'manifest'}")
    return 0


def cmd_train(args) -> int:
    config = resolve(args)
    write_resolved_config(args.out, config, "train", {"data": str(args.data)})
    banner(f"Training on {args.data}")

    def progress(step: int, loss: float, lr: float) -> None:
        if step % args.log_every == 0:
            print(f"  step {step:6d}  loss {loss:.5f}  lr {lr:.2e}")

    try:
        ckpt = train(args.data, config.controller, config.training, args.out, args.resume, progress)
    except DexGraspError as e:
        print(f"  ERROR: {e}")
        return 1
    print(f"\nCheckpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    config = resolve(args)
    suite = load_suite(args.suite, config.sim)
    out = Path(args.out)
    write_resolved_config(out, config, "eval",
                          {"suite": suite.name, "ckpt": str(args.ckpt) if args.ckpt else "expert", "k": args.k})
    banner(f"Suite {suite.name}: {len(suite.entries)} trials ({suite.kind})")

    if suite.kind == "long_horizon":
        return _eval_long_horizon(args, config, suite, out)

    def progress(result) -> None:
        status = f"success on attempt {result.first_success}" if result.success else "failed"
        print(f"  {result.trial_id}: {status}")

    results = run_suite(suite, controller_factory(args, config, suite.kind), backend_factory(config),
                        task_sim_config(config.sim, suite.kind),
                        args.k or config.eval.k_max, args.jobs or config.eval.jobs,
                        out / "transcripts" if args.transcripts else None, progress)
    paths = write_report(out, suite.name, results)
    print()
    print(format_table(success_table(results), trial_counts(results)))
    print(f"\nSaved: {paths['csv']}")

    if not args.gate:
        return 0
    baseline = load_results(args.baseline) if args.baseline else None
    gates = evaluate_gates(suite.name, results, baseline)
    banner("Acceptance gates")
    for gate in gates:
        print(f"  {gate.describe()}")
    return 0 if all(g.passed for g in gates) else 1


def _eval_long_horizon(args, config: RunConfig, suite, out: Path) -> int:
    factory = controller_factory(args, config, "grasp")
    limits = RunLimits(max_attempts_per_instruction=config.planner.max_attempts_per_instruction,
                       max_instructions=config.planner.max_instructions)
    results = []
    for i, entry in enumerate(suite.entries):
        try:
            result = run_long_horizon(entry, factory(trial_seed(suite.seed, i)), backend_factory(config), config.sim,
                                      limits, config.eval.bbox_slack_px, out / "transcripts")
        except Exception as e:
            print(f"  {entry.trial_id}: ERROR: {e}")
            continue
        results.append(result)
        print(f"  {entry.trial_id} {entry.prompt!r}: success={result.task_success} "
              f"grasped={result.objects_grasped} executions={result.executions}")
    if not results:
        print("  ERROR: no long-horizon run completed")
        return 1
    paths = write_long_horizon_report(out, suite.name, results)
    print()
    print(summarize(results).to_string())
    print(f"\nSaved: {paths['csv']}")
    return 0


def cmd_run(args) -> int:
    config = resolve(args)
    out = Path(args.out)
    write_resolved_config(out, config, "run", {"prompt": args.prompt, "scene_seed": args.scene_seed})
    banner(f"Prompt: {args.prompt}")

    rng = np.random.default_rng(args.scene_seed)
    scene = SceneDistribution(name="run", n_objects=(args.objects, args.objects), combos="all").sample(rng, config.sim)
    print(f"  Objects: {', '.join(o.describe() for o in scene.objects)}")

    sim = TabletopSim(config.sim)
    sim.reset(scene)
    controller = controller_factory(args, config, "grasp")(args.seed)
    limits = RunLimits(max_attempts_per_instruction=config.planner.max_attempts_per_instruction,
                       max_instructions=config.planner.max_instructions)
    try:
        transcript, outcome = run_prompt(args.prompt, sim, controller, build_backend(config.planner, sim), limits)
    except DexGraspError as e:
        print(f"  ERROR: {e}")
        return 1

    for record in transcript.records:
        detail = record.parsed if record.subtask else ""
        error = f" ({record.error})" if record.error else ""
        print(f"  {record.phase.value:20s} {detail}{error}")
    path = out / "transcript.json"
    path.write_text(transcript.model_dump_json(indent=2))
    print(f"\nOutcome: {outcome.value}, {len(sim.state.removed)} objects placed")
    print(f"Saved: {path}")
    return 0


def cmd_analyze(args) -> int:
    config = resolve(args)
    out = Path(args.out) / "analysis"
    write_resolved_config(out, config, f"analyze {args.what}", {"scene_seed": args.scene_seed})
    rng = np.random.default_rng(args.scene_seed)
    scene = DEMO_DISTRIBUTION.sample(rng, config.sim)

    if args.what == "attention":
        banner("Attention consistency")
        policy = load_checkpoint(args.ckpt, config.training.device)
        target = pick_target(scene, "grasp", rng)
        report = attention_consistency_report(policy, scene, target, sim_config=config.sim, seed=args.seed,
                                              out_dir=out)
        for c in report.conditions:
            print(f"  {c.label:10s} mass {c.mass_in_mask:.3f}  area {c.mask_fraction:.3f}  ratio {c.ratio:.2f}")
        for pair, value in report.correlations.items():
            print(f"  corr {pair:20s} {value:.3f}")
        print(f"\nSaved: {out / 'attention_consistency.json'}")
        return 0

    banner("PCA feature visualization")
    images, labels = [], []
    for kind in ("white", "dim", "lamp", "disco"):
        sim = TabletopSim(config.sim)
        sim.reset(scene.with_conditions(lighting=Lighting(kind)))
        images.append(sim.observe().head_rgb)
        labels.append(kind)
    viz = pca_feature_viz(images, config.controller.head_encoder, args.enlarge)
    if viz.degenerate:
        print("  WARNING: features have zero variance (Degenerate)")
    rms = float(np.sqrt(np.mean((viz.images[0] - viz.images[1]) ** 2)))
    print(f"  components: {viz.components}")
    print(f"  white vs dim RMS difference: {rms:.2e}")
    panels = [(f"{label} input", img) for label, img in zip(labels, images)]
    panels += [(f"{label} features", to_uint8(v)) for label, v in zip(labels, viz.images)]
    path = save_panel(out / "features.png", panels, title="top-3 principal components of patch features")
    with open(out / "features.json", "w") as f:
        json.dump({"components": viz.components, "degenerate": viz.degenerate, "white_dim_rms": rms}, f, indent=2)
    print(f"\nSaved: {path}")
    return 0


def cmd_bench(args) -> int:
    config = resolve(args)
    out = Path(args.out)
    write_resolved_config(out, config, f"bench {args.what}", {"seed": args.seed})
    results: dict
    if args.what == "schedule":
        banner(f"Noise schedule, T={args.timesteps}")
        schedule = build_schedule(args.timesteps)
        total = schedule.alphas ** 2 + schedule.sigmas ** 2
        results = {
            "timesteps": args.timesteps,
            "max_unit_error": float(np.abs(total - 1.0).max()),
            "alpha_bar_strictly_decreasing": bool(np.all(np.diff(schedule.alpha_bars) < 0)),
            "max_beta": float(schedule.betas.max()),
        }
    else:
        banner(f"Noise assignment, {args.instances} instances of B={args.batch}")
        rng = np.random.default_rng(args.seed)
        mismatches, worse_than_identity = 0, 0
        for _ in range(args.instances):
            chunks = rng.standard_normal((args.batch, 8))
            noises = rng.standard_normal((args.batch, 8))
            cost = assignment_cost(chunks, noises, immiscible_assign(chunks, noises))
            brute = min(assignment_cost(chunks, noises, np.array(p))
                        for p in itertools.permutations(range(args.batch)))
            mismatches += int(not np.isclose(cost, brute, rtol=0, atol=1e-9))
            worse_than_identity += int(cost > assignment_cost(chunks, noises, np.arange(args.batch)) + 1e-12)
        results = {"instances": args.instances, "batch": args.batch, "mismatches": mismatches,
                   "worse_than_identity": worse_than_identity}
    for key, value in results.items():
        print(f"  {key}: {value}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"bench_{args.what}.json", "w") as f:
        json.dump(results, f, indent=2)
    return 0


# --- argument parsing --------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_default: str = "out") -> None:
    p.add_argument("--config", type=Path, help="Dotted-key config file (e.g. cfgs/desk.cfg)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config key (repeatable)")
    p.add_argument("--out", type=Path, default=Path(out_default), help="Output directory")
    p.add_argument("--verbose", "-v", action="store_true", help="Debug logging")


def _controller_args(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpt", type=Path, help="Checkpoint directory")
    group.add_argument("--expert", action="store_true", help="Use the scripted expert as the controller")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dexgrasp",
        description="Hierarchical grasping: planner, diffusion controller, desk simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m dexgrasp.main collect --n 300 --task grasp --seed 7 --out data/
  python -m dexgrasp.main train --config cfgs/desk.cfg --data data/ --out ckpt/
  python -m dexgrasp.main eval --suite suites/seen --ckpt ckpt/checkpoint --gate --out out/seen
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to run")

    p = subparsers.add_parser("collect", help="Record scripted expert demonstrations")
    _common(p, "data")
    p.add_argument("--n", type=int, required=True, help="Number of successful episodes")
    p.add_argument("--task", choices=["grasp", "nonprehensile"], default="grasp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--success-floor", type=float, default=0.5)
    p.add_argument("--overwrite", action="store_true", help="Replace episodes already in --out")
    p.set_defaults(func=cmd_collect)

    p = subparsers.add_parser("train", help="Train the diffusion controller")
    _common(p, "ckpt")
    p.add_argument("--data", type=Path, required=True, help="Dataset directory")
    p.add_argument("--resume", type=Path, help="Checkpoint directory to resume from")
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser("eval", help="Run a benchmark suite")
    _common(p)
    _controller_args(p)
    p.add_argument("--suite", required=True, help="Suite recipe or expanded suite (e.g. suites/seen)")
    p.add_argument("--k", type=int, help="Attempts per trial (default eval.k_max)")
    p.add_argument("--jobs", type=int, help="Parallel trial workers")
    p.add_argument("--gate", action="store_true", help="Exit 1 if an acceptance gate fails")
    p.add_argument("--baseline", type=Path, help="Ablation results JSON for margin gates")
    p.add_argument("--transcripts", action="store_true", help="Save planner transcripts")
    p.set_defaults(func=cmd_eval)

    p = subparsers.add_parser("run", help="Run one prompt end to end")
    _common(p)
    _controller_args(p)
    p.add_argument("--prompt", required=True)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = subparsers.add_parser("analyze", help="Attention maps or feature visualization")
    _common(p)
    p.add_argument("what", choices=["attention", "features"])
    p.add_argument("--ckpt", type=Path)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--enlarge", type=int, default=1, help="Nearest-neighbour enlargement of feature images")
    p.set_defaults(func=cmd_analyze)

    p = subparsers.add_parser("bench", help="Numerical property checks")
    _common(p)
    p.add_argument("what", choices=["schedule", "assignment"])
    p.add_argument("--timesteps", type=int, default=50)
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--batch", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and args.what == "attention" and args.ckpt is None:
        parser.error("analyze attention requires --ckpt")
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValueError as e:
        parser.error(str(e))


if __name__ == "__main__":
    sys.exit(main())
