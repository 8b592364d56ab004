from dataclasses import replace

import numpy as np
import pytest

from dexgrasp.errors import DatasetExists, TooManyObjects, UnknownObject, UnplaceableScene, UnreachableTarget
from dexgrasp.schema.config import SimConfig
from dexgrasp.schema.observation import BBox
from dexgrasp.schema.scene import Lighting, SceneSpec
from dexgrasp.sim.collect import NONPREHENSILE_STEP_CAP, collect_demos, pick_target, task_sim_config
from dexgrasp.sim.distribution import DEMO_DISTRIBUTION, HELD_OUT_COMBOS, SceneDistribution
from dexgrasp.sim.expert import ScriptedExpert
from dexgrasp.sim.world import TabletopSim, overhang, reset, step
from dexgrasp.storage.episode_io import list_episode_dirs, read_meta
from dexgrasp.storage.manifest import compute_manifest, load_manifest, manifests_match

from conftest import make_object, make_plate


def run_expert(sim: TabletopSim, target: str, task_kind: str = "grasp", max_steps: int = 75) -> bool:
    expert = ScriptedExpert(target, task_kind, np.random.default_rng(0), noise_std=0.0)
    expert.begin(sim.state)
    for _ in range(max_steps):
        sim.step(expert.act(sim.state))
        if sim.success():
            return True
    return False


class TestWorld:
    def test_reset_is_deterministic(self, three_object_scene, sim_config):
        state_a, obs_a = reset(three_object_scene, sim_config)
        state_b, obs_b = reset(three_object_scene, sim_config)
        assert state_a.poses == state_b.poses
        np.testing.assert_array_equal(obs_a.head_rgb, obs_b.head_rgb)
        np.testing.assert_array_equal(obs_a.wrist_rgb, obs_b.wrist_rgb)

    def test_valid_poses_kept(self, three_object_scene, sim_config):
        state, _ = reset(three_object_scene, sim_config)
        assert state.poses == tuple(o.pose for o in three_object_scene.objects)
        assert state.gripper == sim_config.home

    def test_rate_limit(self, three_object_scene, sim_config):
        state, _ = reset(three_object_scene, sim_config)
        nxt, obs, done = step(state, np.array([0.0, 1.0, 0.0, 0.0]))
        delta = np.abs(np.asarray(nxt.gripper) - np.asarray(state.gripper))
        assert np.all(delta <= sim_config.delta_max + 1e-12)
        assert nxt.step == 1
        assert not done
        np.testing.assert_allclose(obs.proprio, nxt.gripper)

    def test_done_at_max_steps(self, three_object_scene):
        config = SimConfig(max_steps=3)
        state, _ = reset(three_object_scene, config)
        done = False
        for _ in range(3):
            state, _, done = step(state, np.asarray(config.home))
        assert done

    def test_too_many_objects(self, sim_config):
        objects = [make_object(f"o{i}", "red", "circle", 0.15 + 0.07 * i, 0.5) for i in range(10)]
        with pytest.raises(TooManyObjects):
            reset(SceneSpec(objects=objects), sim_config)

    def test_unplaceable(self):
        config = SimConfig(min_separation=0.5, placement_retries=5)
        objects = [make_object(f"o{i}", "red", "circle", 0.5, 0.5) for i in range(9)]
        with pytest.raises(UnplaceableScene):
            reset(SceneSpec(objects=objects), config)

    def test_dim_is_half_of_white(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        white = sim.reset(three_object_scene.with_conditions(lighting=Lighting.WHITE))
        dim = sim.reset(three_object_scene.with_conditions(lighting=Lighting.DIM))
        np.testing.assert_array_equal(dim.head_rgb.astype(np.int32) * 2, white.head_rgb.astype(np.int32))

    def test_gt_mask_and_bbox(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        mask = sim.gt_mask("obj0")
        assert mask.shape == (96, 96, 1)
        expected_area = np.pi * 0.035**2 * 96**2
        assert abs(int(mask.sum()) - expected_area) < 0.25 * expected_area

        bbox = sim.gt_bbox("obj0")
        assert bbox == BBox.from_mask(mask)
        # x = 0.25 lies at column 24; the left third of the frame
        assert bbox.x1 < 24 < bbox.x2
        assert bbox.y1 < 48 < bbox.y2

    def test_unknown_object(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        with pytest.raises(UnknownObject):
            sim.gt_mask("nope")

    def test_requires_reset(self):
        with pytest.raises(RuntimeError):
            TabletopSim().observe()


class TestExpert:
    def test_grasp_each_object(self, three_object_scene, sim_config):
        for obj in three_object_scene.objects:
            sim = TabletopSim(sim_config)
            sim.reset(three_object_scene)
            assert run_expert(sim, obj.object_id), obj.object_id
            assert sim.state.held_object == obj.object_id

    def test_demo_scenes(self, sim_config):
        rng = np.random.default_rng(7)
        for _ in range(10):
            scene = DEMO_DISTRIBUTION.sample(rng, sim_config)
            target = pick_target(scene, "grasp", rng)
            sim = TabletopSim(sim_config)
            sim.reset(scene)
            assert run_expert(sim, target, max_steps=sim_config.max_steps)

    def test_plate_not_graspable_target(self, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(SceneSpec(objects=[make_plate(0.5, 0.5)]))
        expert = ScriptedExpert("plate", "grasp", np.random.default_rng(0))
        with pytest.raises(UnreachableTarget):
            expert.begin(sim.state)

    def test_place_and_reset_robot(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        assert run_expert(sim, "obj2")
        sim.place_held()
        assert sim.state.held_object is None
        assert "obj2" in sim.state.removed
        assert [o.object_id for o in sim.state.on_table()] == ["obj0", "obj1"]
        assert not (sim.id_buffer() == 2).any()

        sim.reset_robot()
        assert sim.state.gripper == sim_config.home
        assert sim.state.step == 0
        assert "obj2" in sim.state.removed


class TestNonprehensile:
    def test_plate_grippable_only_with_overhang(self, sim_config):
        plate = make_plate(0.5, 0.5)
        assert overhang(plate, (0.5, 0.5, 0.0), sim_config) < 0.4 * plate.size
        assert overhang(plate, (0.88, 0.5, 0.0), sim_config) == pytest.approx(0.08)

        sim = TabletopSim(sim_config)
        sim.reset(SceneSpec(objects=[plate]))
        closing = replace(sim.state, gripper=(0.5, 0.5, 0.1, 0.35))
        held, _, _ = step(closing, np.array([0.5, 0.5, 0.1, 0.0]))
        assert held.held_object is None

        hanging = replace(sim.state, poses=((0.88, 0.5, 0.0),), gripper=(0.88, 0.5, 0.1, 0.35))
        held, _, _ = step(hanging, np.array([0.88, 0.5, 0.1, 0.0]))
        assert held.held_object == "plate"

    def test_low_gripper_pushes(self, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(SceneSpec(objects=[make_plate(0.5, 0.5)]))
        state = replace(sim.state, gripper=(0.32, 0.5, 0.05, 1.0))
        pushed, _, _ = step(state, np.array([0.5, 0.5, 0.05, 1.0]))
        x, y, _ = pushed.pose_of("plate")
        assert x == pytest.approx(0.40 + 0.12)
        assert y == pytest.approx(0.5)

    def test_high_gripper_passes_over(self, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(SceneSpec(objects=[make_plate(0.5, 0.5)]))
        state = replace(sim.state, gripper=(0.32, 0.5, 0.4, 1.0))
        moved, _, _ = step(state, np.array([0.5, 0.5, 0.4, 1.0]))
        assert moved.pose_of("plate") == (0.5, 0.5, 0.0)

    def test_expert_pushes_then_lifts(self):
        config = SimConfig(max_steps=NONPREHENSILE_STEP_CAP)
        sim = TabletopSim(config)
        sim.reset(SceneSpec(objects=[make_plate(0.5, 0.5)]))
        assert run_expert(sim, "plate", "nonprehensile", max_steps=NONPREHENSILE_STEP_CAP)
        assert sim.state.pose_of("plate")[0] < 0.2


class TestDistribution:
    def test_seeded_sampling(self, sim_config):
        a = DEMO_DISTRIBUTION.sample(np.random.default_rng(3), sim_config)
        b = DEMO_DISTRIBUTION.sample(np.random.default_rng(3), sim_config)
        assert a == b
        assert len(a.objects) == 6

    def test_seen_and_unseen_disjoint(self, sim_config):
        rng = np.random.default_rng(0)
        seen = SceneDistribution(name="seen", combos="seen")
        unseen = SceneDistribution(name="unseen", combos="unseen")
        for _ in range(5):
            for obj in seen.sample(rng, sim_config).objects:
                assert (obj.color_name, obj.shape.value) not in HELD_OUT_COMBOS
            for obj in unseen.sample(rng, sim_config).objects:
                assert (obj.color_name, obj.shape.value) in HELD_OUT_COMBOS

    def test_required_colors(self, sim_config):
        dist = SceneDistribution(name="reds", n_objects=(4, 4), combos="all", required_colors=["red", "red"])
        scene = dist.sample(np.random.default_rng(1), sim_config)
        assert sum(o.color_name == "red" for o in scene.objects) >= 2

    def test_pushable_distribution(self, sim_config):
        dist = SceneDistribution(name="push", n_objects=(2, 2), pushable_target=True)
        scene = dist.sample(np.random.default_rng(0), sim_config)
        assert pick_target(scene, "nonprehensile", np.random.default_rng(0)) == "plate"

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            SceneDistribution(n_objects=(3, 12))


class TestCollect:
    def test_episode_shape(self, recorded_dataset):
        dirs = list_episode_dirs(recorded_dataset)
        assert len(dirs) == 3
        manifest = load_manifest(recorded_dataset)
        assert manifest.episode_lengths == [75, 75, 75]
        assert manifest.image_resolution == (96, 96)
        assert manifest.task_kind == "grasp"
        assert manifests_match(manifest, compute_manifest(recorded_dataset))
        meta = read_meta(dirs[0])
        assert meta["length"] == 75

    def test_refuses_existing_episodes(self, tmp_path):
        collect_demos(2, task_kind="grasp", out_dir=tmp_path, seed=1)
        with pytest.raises(DatasetExists):
            collect_demos(1, task_kind="grasp", out_dir=tmp_path, seed=2)
        assert len(list_episode_dirs(tmp_path)) == 2

    def test_overwrite_replaces_dataset(self, tmp_path):
        collect_demos(2, task_kind="grasp", out_dir=tmp_path, seed=1)
        manifest = collect_demos(1, task_kind="grasp", out_dir=tmp_path, seed=2, overwrite=True)
        assert manifest.episode_count == 1
        assert len(list_episode_dirs(tmp_path)) == 1
        assert load_manifest(tmp_path).episode_count == 1

    def test_task_step_cap(self, sim_config):
        assert task_sim_config(sim_config, "grasp").max_steps == sim_config.max_steps
        assert task_sim_config(sim_config, "nonprehensile").max_steps == NONPREHENSILE_STEP_CAP
        assert sim_config.max_steps == 75
