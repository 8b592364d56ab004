import json

import numpy as np
import pytest
import torch

from dexgrasp.analysis.attention_maps import AttentionRecord, AttentionRecorder, aggregate_attention
from dexgrasp.analysis.features import fix_signs, otsu_threshold, pca_feature_viz, to_uint8
from dexgrasp.analysis.overlay import overlay_attention, save_panel
from dexgrasp.analysis.report import (
    SceneVariant,
    attention_consistency_report,
    attention_mass,
    consistency_from_maps,
    map_correlation,
)
from dexgrasp.controller.policy import DiffusionGraspPolicy
from dexgrasp.errors import RecordingAbsent
from dexgrasp.schema.config import EncoderSpec
from dexgrasp.schema.scene import LightingSpec

from conftest import random_observation, tiny_controller_config


def synthetic_record(rng: np.random.Generator, steps=3, layers=2, heads=2, lq=4, grid=(2, 2)) -> AttentionRecord:
    lk = 1 + 2 * grid[0] * grid[1] + 1
    logits = rng.normal(size=(steps, layers, heads, lq, lk))
    weights = np.exp(logits) / np.exp(logits).sum(axis=-1, keepdims=True)
    return AttentionRecord(weights=weights, head_columns=(1, 1 + grid[0] * grid[1]), grid=grid)


class TestAttentionMaps:
    def test_aggregate_is_distribution(self):
        record = synthetic_record(np.random.default_rng(0))
        patch_map, image_map = aggregate_attention(record, image_side=8)
        assert patch_map.shape == (2, 2)
        assert patch_map.sum() == pytest.approx(1.0)
        assert (patch_map >= 0).all()
        assert image_map.shape == (8, 8)

    def test_aggregate_concentrated(self):
        weights = np.zeros((1, 1, 1, 2, 6))
        weights[..., 3] = 1.0
        record = AttentionRecord(weights=weights, head_columns=(1, 5), grid=(2, 2))
        patch_map, _ = aggregate_attention(record)
        np.testing.assert_allclose(patch_map, [[0.0, 0.0], [1.0, 0.0]])

    def test_absent_recording(self):
        with pytest.raises(RecordingAbsent):
            aggregate_attention(None)
        empty = AttentionRecord(weights=np.zeros((0, 1, 1, 1, 6)), head_columns=(1, 5), grid=(2, 2))
        with pytest.raises(RecordingAbsent):
            aggregate_attention(empty)

    def test_record_validation(self):
        with pytest.raises(ValueError):
            AttentionRecord(weights=np.full((1, 1, 1, 1, 6), 0.5), head_columns=(1, 5), grid=(2, 2))
        with pytest.raises(ValueError):
            AttentionRecord(weights=np.full((1, 1, 1, 1, 6), 1 / 6), head_columns=(1, 4), grid=(2, 2))

    def test_recorder_captures_policy(self, tiny_manifest):
        policy = DiffusionGraspPolicy(tiny_controller_config(), tiny_manifest)
        obs = random_observation(32, np.random.default_rng(0))
        with AttentionRecorder(policy) as recorder:
            policy.predict_chunk(obs, torch.Generator().manual_seed(0), on_step=recorder.on_step)
        record = recorder.record()
        steps, layers, heads, lq, _ = record.weights.shape
        assert (steps, layers, heads, lq) == (10, 1, 2, 4)
        assert record.grid == (4, 4)
        assert record.head_columns == (1, 17)
        patch_map, _ = aggregate_attention(record, 32)
        assert patch_map.sum() == pytest.approx(1.0)
        assert all(block.cross_attn.hook is None for block in policy.denoiser.blocks)

    def test_recorder_without_sampling(self, tiny_manifest):
        policy = DiffusionGraspPolicy(tiny_controller_config(), tiny_manifest)
        with AttentionRecorder(policy) as recorder:
            pass
        with pytest.raises(RecordingAbsent):
            recorder.record()


class TestReport:
    def test_mass_inside_mask(self):
        image_map = np.zeros((8, 8))
        image_map[2:4, 2:4] = 0.25
        mask = np.zeros((8, 8, 1), dtype=np.uint8)
        mask[1:5, 1:5] = 1
        assert attention_mass(image_map, mask) == pytest.approx(1.0)
        assert attention_mass(image_map, 1 - mask) == pytest.approx(0.0)
        assert attention_mass(np.zeros((8, 8)), mask) == 0.0

    def test_correlation(self):
        a = np.arange(4.0)
        assert map_correlation(a, 2 * a + 1) == pytest.approx(1.0)
        assert map_correlation(a, -a) == pytest.approx(-1.0)
        assert map_correlation(np.ones(4), np.ones(4)) == 1.0

    def test_consistency_from_maps(self):
        patch = np.array([[0.7, 0.1], [0.1, 0.1]])
        image = np.kron(patch, np.ones((4, 4))) / 16
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[:4, :4] = 1
        report = consistency_from_maps("obj0", {"a": patch, "b": patch}, {"a": image, "b": image},
                                       {"a": mask, "b": mask})
        assert report.conditions[0].mass_in_mask == pytest.approx(0.7)
        assert report.conditions[0].mask_fraction == pytest.approx(0.25)
        assert report.min_ratio == pytest.approx(2.8)
        assert report.correlations == {"a|b": pytest.approx(1.0)}

    def test_end_to_end_report(self, tmp_path, three_object_scene, sim_config, tiny_manifest):
        policy = DiffusionGraspPolicy(tiny_controller_config(patch_side=16), tiny_manifest, image_side=96)
        variants = [SceneVariant(label="white"), SceneVariant(label="dim", lighting=LightingSpec(kind="dim"))]
        report = attention_consistency_report(policy, three_object_scene, "obj1", variants, sim_config,
                                              out_dir=tmp_path)
        assert [c.label for c in report.conditions] == ["white", "dim"]
        assert all(0.0 <= c.mass_in_mask <= 1.0 for c in report.conditions)
        assert set(report.correlations) == {"white|dim"}
        with open(tmp_path / "attention_consistency.json") as f:
            assert json.load(f)["target_object_id"] == "obj1"
        assert (tmp_path / "attention_overlays.png").exists()


class TestFeatures:
    def test_otsu_two_clusters(self):
        values = np.array([0.0, 0.1, 0.2, 5.0, 5.1])
        t = otsu_threshold(values)
        assert 0.2 < t < 5.0
        assert otsu_threshold(np.full(4, 3.0)) == 3.0

    def test_fix_signs(self):
        comps = fix_signs(np.array([[0.1, -0.9], [0.5, 0.2]]))
        np.testing.assert_allclose(comps, [[-0.1, 0.9], [0.5, 0.2]])

    def test_uniform_images_are_degenerate(self):
        spec = EncoderSpec(patch_side=8, output_dim=16)
        viz = pca_feature_viz([np.full((32, 32, 3), 200, dtype=np.uint8)] * 2, spec)
        assert viz.degenerate
        assert viz.components == 0
        assert viz.images[0].shape == (4, 4, 3)

    def test_feature_images(self):
        spec = EncoderSpec(patch_side=8, output_dim=16)
        rng = np.random.default_rng(0)
        images = []
        for _ in range(2):
            img = np.full((32, 32, 3), 255, dtype=np.uint8)
            img[8:24, 8:24] = rng.integers(0, 256, (16, 16, 3))
            images.append(img)
        viz = pca_feature_viz(images, spec, enlarge_factor=2)
        assert not viz.degenerate
        assert viz.components <= 3
        assert viz.images[0].shape == (8, 8, 3)
        assert viz.foreground[0].shape == (4, 4)
        assert viz.images[0].min() >= 0.0 and viz.images[0].max() <= 1.0
        assert to_uint8(viz.images[0]).dtype == np.uint8

    def test_empty_input(self):
        with pytest.raises(ValueError):
            pca_feature_viz([], EncoderSpec(patch_side=8, output_dim=16))


class TestOverlay:
    def test_zero_map_darkens(self):
        image = np.full((4, 4, 3), 200, dtype=np.uint8)
        out = overlay_attention(image, np.zeros((4, 4)))
        assert (out == 0).all()

    def test_peak_brightens(self):
        image = np.full((4, 4, 3), 100, dtype=np.uint8)
        attention = np.zeros((4, 4))
        attention[0, 0] = 1.0
        out = overlay_attention(image, attention, gain=2.0)
        assert out[0, 0, 0] == 200
        assert out[3, 3, 0] == 0

    def test_shape_errors(self):
        image = np.zeros((4, 4, 3), dtype=np.uint8)
        with pytest.raises(ValueError):
            overlay_attention(image, np.zeros((4, 5)))
        with pytest.raises(ValueError):
            overlay_attention(image, -np.ones((4, 4)))

    def test_save_panel(self, tmp_path):
        path = save_panel(tmp_path / "fig" / "p.png", [("a", np.zeros((4, 4, 3), dtype=np.uint8))], title="t")
        assert path.exists()
