import numpy as np
import pytest
import torch

from dexgrasp.controller.checkpoint import load_checkpoint, load_parameters, save_checkpoint
from dexgrasp.controller.denoiser import ActionDenoiser
from dexgrasp.controller.policy import DiffusionGraspPolicy
from dexgrasp.controller.rollout import (
    ExpertController,
    PolicyController,
    RolloutOutcome,
    execute_receding_horizon,
)
from dexgrasp.controller.sampling import ddim_sample, ddim_timesteps
from dexgrasp.controller.schedule import build_schedule, forward_noise, reconstruct
from dexgrasp.errors import CheckpointMismatch, DiffusionStepOutOfRange, TrackLost
from dexgrasp.perception.tracker import OracleTracker
from dexgrasp.schema.config import DiTConfig
from dexgrasp.schema.observation import ActionChunk
from dexgrasp.sim.collect import task_sim_config
from dexgrasp.sim.expert import scripted_expert
from dexgrasp.sim.world import TabletopSim

from conftest import random_observation, tiny_controller_config


class TestSchedule:
    def test_coefficients(self):
        schedule = build_schedule(50)
        np.testing.assert_allclose(schedule.alphas**2 + schedule.sigmas**2, 1.0, atol=1e-12)
        assert schedule.alpha_bars[0] == 1.0
        assert np.all(np.diff(schedule.alpha_bars) < 0)
        assert np.all(schedule.betas <= 0.999)
        assert np.all(schedule.betas > 0)
        assert schedule.alpha_bars.shape == (51,)

    def test_noising_is_invertible(self):
        schedule = build_schedule(50)
        rng = np.random.default_rng(0)
        chunk = rng.uniform(-1, 1, (16, 4))
        eps = rng.normal(size=(16, 4))
        for k in range(51):
            back = reconstruct(forward_noise(chunk, eps, k, schedule), eps, k, schedule)
            assert np.max(np.abs(back - chunk)) < 1e-6

    def test_torch_batch_matches_numpy(self):
        schedule = build_schedule(10)
        chunk = torch.rand(3, 4, 2, dtype=torch.float64)
        eps = torch.randn(3, 4, 2, dtype=torch.float64)
        k = torch.tensor([1, 5, 10])
        noised = forward_noise(chunk, eps, k, schedule)
        for i, step in enumerate([1, 5, 10]):
            expected = forward_noise(chunk[i].numpy(), eps[i].numpy(), step, schedule)
            np.testing.assert_allclose(noised[i].numpy(), expected, atol=1e-12)

    def test_step_out_of_range(self):
        schedule = build_schedule(50)
        with pytest.raises(DiffusionStepOutOfRange):
            schedule.alpha(51)
        with pytest.raises(DiffusionStepOutOfRange):
            forward_noise(np.zeros(2), np.zeros(2), -1, schedule)
        with pytest.raises(ValueError):
            build_schedule(0)


class TestDDIM:
    def test_timesteps(self):
        assert ddim_timesteps(50, 10) == [46, 41, 36, 31, 26, 21, 16, 11, 6, 1]
        assert ddim_timesteps(10, 10) == list(range(10, 0, -1))
        with pytest.raises(ValueError):
            ddim_timesteps(10, 11)

    @pytest.mark.parametrize("n_steps", [50, 10, 1])
    def test_oracle_denoiser_recovers_chunk(self, n_steps):
        schedule = build_schedule(50)
        gen = torch.Generator().manual_seed(0)
        chunk = torch.rand(2, 16, 4, generator=gen, dtype=torch.float64) * 1.8 - 0.9
        eps = torch.randn(2, 16, 4, generator=gen, dtype=torch.float64)
        first = ddim_timesteps(50, n_steps)[0]
        x_T = forward_noise(chunk, eps, first, schedule)
        visited = []

        def oracle(x, k, condition):
            return eps

        out = ddim_sample(oracle, torch.zeros(2, 1, 1, dtype=torch.float64), schedule, n_steps,
                          tuple(chunk.shape), x_T=x_T, on_step=lambda i, k: visited.append(k))
        assert torch.sqrt(torch.mean((out - chunk) ** 2)).item() < 1e-4
        assert visited == ddim_timesteps(50, n_steps)

    def test_seeded_sampling_is_deterministic(self):
        schedule = build_schedule(10)
        cond = torch.zeros(1, 1, 1)

        def zero(x, k, condition):
            return torch.zeros_like(x)

        a = ddim_sample(zero, cond, schedule, 5, (1, 4, 2), torch.Generator().manual_seed(3))
        b = ddim_sample(zero, cond, schedule, 5, (1, 4, 2), torch.Generator().manual_seed(3))
        assert torch.equal(a, b)
        assert a.abs().max() <= 1.0


class TestDenoiser:
    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        config = DiTConfig(d_model=8, layers=1, heads=2, attn_dropout=0.0, horizon=3, action_dim=2)
        model = ActionDenoiser(config).double().eval()
        torch.nn.init.normal_(model.action_out.weight, std=0.5)
        x = torch.randn(2, 3, 2, dtype=torch.float64, requires_grad=True)
        cond = torch.randn(2, 5, 8, dtype=torch.float64, requires_grad=True)
        k = torch.tensor([3, 7])
        assert torch.autograd.gradcheck(lambda a, c: model(a, k, c), (x, cond), eps=1e-6, atol=1e-5)

    def test_shape_checks(self):
        model = ActionDenoiser(DiTConfig(d_model=8, layers=1, heads=2, horizon=3, action_dim=2))
        with pytest.raises(ValueError):
            model(torch.zeros(1, 4, 2), torch.tensor([1]), torch.zeros(1, 5, 8))
        with pytest.raises(ValueError):
            model(torch.zeros(1, 3, 2), torch.tensor([1]), torch.zeros(1, 5, 6))

    def test_attention_rows_sum_to_one(self):
        torch.manual_seed(0)
        model = ActionDenoiser(DiTConfig(d_model=8, layers=2, heads=2, horizon=3, action_dim=2)).eval()
        captured = {"self": [], "cross": []}
        model.set_self_attention_hook(captured["self"].append)
        model.set_cross_attention_hook(lambda layer: captured["cross"].append)
        model(torch.randn(2, 3, 2), torch.tensor([1, 2]), torch.randn(2, 5, 8))
        assert len(captured["self"]) == 2 and len(captured["cross"]) == 2
        for weights in captured["self"] + captured["cross"]:
            assert torch.all(weights >= 0)
            assert torch.allclose(weights.sum(dim=-1), torch.ones(weights.shape[:-1]), atol=1e-5)
        assert captured["self"][0].shape == (2, 2, 3, 3)
        assert captured["cross"][0].shape == (2, 2, 3, 6)

    def test_zero_initialized_output(self):
        model = ActionDenoiser(DiTConfig(d_model=8, layers=1, heads=2, horizon=3, action_dim=2))
        out = model(torch.randn(2, 3, 2), torch.tensor([1, 2]), torch.randn(2, 5, 8))
        assert torch.count_nonzero(out) == 0


class TestPolicy:
    def test_condition_layout(self, tiny_controller, tiny_manifest):
        policy = DiffusionGraspPolicy(tiny_controller, tiny_manifest, 32)
        batch = policy.observation_batch(random_observation(32, np.random.default_rng(0)))
        cond = policy.encode_observation(batch["head_rgb"], batch["wrist_rgb"], batch["mask"], batch["state"])
        # proprio token, 16 head patches, 16 wrist patches; the step token is appended by the DiT
        assert cond.shape == (1, tiny_controller.condition_length(32) - 1, 16)

    def test_predict_chunk(self, tiny_controller, tiny_manifest):
        policy = DiffusionGraspPolicy(tiny_controller, tiny_manifest, 32)
        chunk = policy.predict_chunk(random_observation(32, np.random.default_rng(0)),
                                     torch.Generator().manual_seed(0), start_step=6)
        assert chunk.actions.shape == (4, 4)
        assert chunk.start_step == 6
        assert np.all(chunk.actions >= 0.0) and np.all(chunk.actions <= 1.0)
        assert policy.training

    def test_dropout_off_at_inference(self, tiny_manifest):
        config = tiny_controller_config()
        config = config.model_copy(update={"dit": config.dit.model_copy(update={"attn_dropout": 0.5})})
        torch.manual_seed(0)
        policy = DiffusionGraspPolicy(config, tiny_manifest, 32)
        torch.nn.init.normal_(policy.denoiser.action_out.weight, std=0.5)
        obs = random_observation(32, np.random.default_rng(0))

        batch = policy.observation_batch(obs)
        cond = policy.encode_observation(batch["head_rgb"], batch["wrist_rgb"], batch["mask"], batch["state"])
        x = torch.randn(1, 4, 4)
        k = torch.tensor([5])
        with torch.no_grad():
            assert not torch.equal(policy.denoiser(x, k, cond), policy.denoiser(x, k, cond))

        first = policy.predict_chunk(obs, torch.Generator().manual_seed(3))
        second = policy.predict_chunk(obs, torch.Generator().manual_seed(3))
        np.testing.assert_array_equal(first.actions, second.actions)
        assert policy.training

    def test_frozen_encoders(self, tiny_controller, tiny_manifest):
        policy = DiffusionGraspPolicy(tiny_controller, tiny_manifest, 32)
        assert set(policy.frozen_modules()) == {"head_encoder", "wrist_encoder"}
        counts = policy.parameter_counts()
        assert counts["frozen"] > 0 and counts["trainable"] > 0
        assert counts["total"] == counts["frozen"] + counts["trainable"]

    def test_dimension_mismatch(self, tiny_manifest):
        config = tiny_controller_config().model_copy(deep=True)
        config.state_dim = 3
        with pytest.raises(ValueError):
            DiffusionGraspPolicy(config, tiny_manifest, 32)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, tiny_controller, tiny_manifest):
        torch.manual_seed(1)
        policy = DiffusionGraspPolicy(tiny_controller, tiny_manifest, 32)
        save_checkpoint(tmp_path / "ckpt", policy)
        loaded = load_checkpoint(tmp_path / "ckpt")

        for (name, a), (_, b) in zip(policy.state_dict().items(), loaded.state_dict().items()):
            assert torch.equal(a, b), name
        obs = random_observation(32, np.random.default_rng(2))
        a = policy.predict_chunk(obs, torch.Generator().manual_seed(5)).actions
        b = loaded.predict_chunk(obs, torch.Generator().manual_seed(5)).actions
        np.testing.assert_array_equal(a, b)

    def test_shape_mismatch(self, tmp_path, tiny_controller, tiny_manifest):
        save_checkpoint(tmp_path / "ckpt", DiffusionGraspPolicy(tiny_controller, tiny_manifest, 32))
        wider = DiffusionGraspPolicy(tiny_controller_config(d_model=32), tiny_manifest, 32)
        with pytest.raises(CheckpointMismatch):
            load_parameters(wider, tmp_path / "ckpt")

    def test_incomplete_directory(self, tmp_path, tiny_controller, tiny_manifest):
        save_checkpoint(tmp_path / "ckpt", DiffusionGraspPolicy(tiny_controller, tiny_manifest, 32))
        (tmp_path / "ckpt" / "shapes").unlink()
        with pytest.raises(CheckpointMismatch):
            load_checkpoint(tmp_path / "ckpt")


class ExpertChunkPolicy:
    """Repeats the scripted expert's current action over the chunk."""

    def __init__(self, sim: TabletopSim, target: str, horizon: int = 4):
        self.sim = sim
        self.target = target
        self.horizon = horizon

    def predict_chunk(self, observation, generator=None, start_step=0):
        action = scripted_expert(self.sim.state, self.target).target
        return ActionChunk(actions=np.tile(action, (self.horizon, 1)), start_step=start_step)


class HomePolicy:
    def __init__(self, home):
        self.home = np.asarray(home, dtype=np.float32)

    def predict_chunk(self, observation, generator=None, start_step=0):
        return ActionChunk(actions=np.tile(self.home, (4, 1)), start_step=start_step)


class LosingTracker:
    def track(self, mask, image=None):
        raise TrackLost("gone")


class TestRecedingHorizon:
    def test_expert_chunks_succeed(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        tracker = OracleTracker(sim)
        mask = tracker.initialize(sim.gt_mask("obj1"))
        rollout = execute_receding_horizon(ExpertChunkPolicy(sim, "obj1"), sim, tracker, mask,
                                           budget=40, execute_steps=2)
        assert rollout.outcome == RolloutOutcome.SUCCESS
        assert rollout.success
        assert rollout.prediction_steps == list(range(0, rollout.steps, 2))

    def test_budget_exhausted(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        tracker = OracleTracker(sim)
        mask = tracker.initialize(sim.gt_mask("obj0"))
        rollout = execute_receding_horizon(HomePolicy(sim_config.home), sim, tracker, mask,
                                           budget=3, execute_steps=2)
        assert rollout.outcome == RolloutOutcome.BUDGET_EXHAUSTED
        assert rollout.steps == 6
        assert rollout.prediction_steps == [0, 2, 4]

    def test_nonprehensile_rollout_outlasts_grasp_limit(self, three_object_scene, sim_config):
        steps = {}
        for kind in ("grasp", "nonprehensile"):
            sim = TabletopSim(task_sim_config(sim_config, kind))
            sim.reset(three_object_scene)
            tracker = OracleTracker(sim)
            mask = tracker.initialize(sim.gt_mask("obj0"))
            rollout = execute_receding_horizon(HomePolicy(sim_config.home), sim, tracker, mask,
                                               budget=50, execute_steps=2)
            steps[kind] = rollout.steps
        assert steps == {"grasp": 75, "nonprehensile": 100}

    def test_track_lost_stops(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        rollout = execute_receding_horizon(HomePolicy(sim_config.home), sim, LosingTracker(),
                                           sim.gt_mask("obj0"), budget=3, execute_steps=2)
        assert rollout.outcome == RolloutOutcome.TRACK_LOST
        assert rollout.steps == 1

    def test_policy_controller(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        controller = PolicyController(ExpertChunkPolicy(sim, "obj2"), chunk_budget=40, execute_steps=2)
        result = controller.execute(sim, sim.gt_bbox("obj2"))
        assert result.lifted
        assert result.outcome == RolloutOutcome.SUCCESS.value
        assert controller.last_rollout.steps == result.steps

    def test_expert_controller_reports_empty_box(self, three_object_scene, sim_config):
        from dexgrasp.schema.observation import BBox

        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        result = ExpertController().execute(sim, BBox(x1=12, y1=12, x2=16, y2=16))
        assert not result.lifted
        assert result.outcome == "NoObjectInBox"
        assert result.steps == 0
