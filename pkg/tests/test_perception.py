from dataclasses import replace

import numpy as np
import pytest
import requests

from dexgrasp.errors import InvalidBBox, NoObjectInBox, RemoteServiceError, TrackLost, WrongResolution
from dexgrasp.perception.encoder import PatchEncoder, encode, parameter_hash
from dexgrasp.perception.remote import PerceptionClient
from dexgrasp.perception.segmenter import OracleSegmenter
from dexgrasp.perception.tracker import OracleTracker, TrackerCorruption
from dexgrasp.schema.config import EncoderKind, EncoderSpec
from dexgrasp.schema.observation import BBox
from dexgrasp.sim.world import TabletopSim
from dexgrasp.utils.imaging import mask_to_png_base64

from conftest import FakeResponse, FakeSession


class TestEncoder:
    def test_brightness_invariance(self):
        spec = EncoderSpec(patch_side=8, output_dim=32, weight_seed=1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            image = rng.uniform(0.0, 255.0, (32, 32, 3))
            a = rng.uniform(0.3, 1.0)
            b = rng.uniform(-20.0, 20.0)
            base = encode(image, spec).tokens
            shifted = encode(a * image + b, spec).tokens
            assert np.max(np.abs(base - shifted)) < 1e-5

    def test_grid_layout(self):
        spec = EncoderSpec(patch_side=8, output_dim=16)
        grid = encode(np.zeros((32, 32, 3), dtype=np.uint8), spec)
        assert grid.grid == (4, 4)
        assert grid.tokens.shape == (16, 16)

    def test_wrong_resolution(self):
        spec = EncoderSpec(patch_side=8, output_dim=16)
        with pytest.raises(WrongResolution):
            encode(np.zeros((32, 24, 3)), spec)
        with pytest.raises(WrongResolution):
            PatchEncoder(spec, image_side=30)

    def test_unstandardized_encoder_sees_brightness(self):
        spec = EncoderSpec(kind=EncoderKind.TRAINABLE_PATCH, frozen=False, standardize=False,
                           patch_side=8, output_dim=16)
        image = np.random.default_rng(1).uniform(0.0, 255.0, (32, 32, 3))
        assert np.max(np.abs(encode(image, spec).tokens - encode(0.5 * image, spec).tokens)) > 1e-3

    def test_weights_seeded(self):
        spec = EncoderSpec(patch_side=8, output_dim=16, weight_seed=4)
        a, b = PatchEncoder(spec, 32), PatchEncoder(spec, 32)
        assert parameter_hash(a) == parameter_hash(b)
        other = PatchEncoder(spec.model_copy(update={"weight_seed": 5}), 32)
        assert parameter_hash(a) != parameter_hash(other)

    def test_frozen_has_no_trainable_parameters(self):
        encoder = PatchEncoder(EncoderSpec(patch_side=8, output_dim=16), 32)
        assert not any(p.requires_grad for p in encoder.parameters())


class TestSegmenter:
    def test_exact_bbox_gives_gt_mask(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        obs = sim.reset(three_object_scene)
        segmenter = OracleSegmenter(sim)
        for obj in three_object_scene.objects:
            mask = segmenter.segment(obs.head_rgb, sim.gt_bbox(obj.object_id))
            np.testing.assert_array_equal(mask, sim.gt_mask(obj.object_id))

    def test_loose_bbox(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        obs = sim.reset(three_object_scene)
        b = sim.gt_bbox("obj1")
        loose = BBox(x1=b.x1 - 2, y1=b.y1 - 2, x2=b.x2 + 2, y2=b.y2 + 2)
        np.testing.assert_array_equal(OracleSegmenter(sim).segment(obs.head_rgb, loose), sim.gt_mask("obj1"))

    def test_empty_box(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        obs = sim.reset(three_object_scene)
        # table corner far from every object and from the gripper marker
        with pytest.raises(NoObjectInBox):
            OracleSegmenter(sim).segment(obs.head_rgb, BBox(x1=12, y1=12, x2=16, y2=16))

    def test_box_outside_image(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        obs = sim.reset(three_object_scene)
        with pytest.raises(InvalidBBox):
            OracleSegmenter(sim).segment(obs.head_rgb, BBox(x1=90, y1=10, x2=120, y2=20))


class TestTracker:
    def test_follows_moving_object(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        tracker = OracleTracker(sim)
        mask = tracker.initialize(sim.gt_mask("obj1"))
        moved = list(sim.state.poses)
        moved[1] = (0.5, 0.7, 0.0)
        sim.state = replace(sim.state, poses=tuple(moved))
        mask = tracker.track(mask)
        np.testing.assert_array_equal(mask, sim.gt_mask("obj1"))

    def test_occlusion_then_lost(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        tracker = OracleTracker(sim, max_occluded=5)
        first = tracker.initialize(sim.gt_mask("obj0"))
        sim.state = replace(sim.state, removed=frozenset({"obj0"}))
        mask = first
        for _ in range(5):
            mask = tracker.track(mask)
            np.testing.assert_array_equal(mask, first)
        with pytest.raises(TrackLost):
            tracker.track(mask)

    def test_recovers_after_brief_occlusion(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        tracker = OracleTracker(sim, max_occluded=2)
        mask = tracker.initialize(sim.gt_mask("obj0"))
        visible = sim.state
        sim.state = replace(visible, removed=frozenset({"obj0"}))
        mask = tracker.track(tracker.track(mask))
        sim.state = visible
        mask = tracker.track(mask)
        assert tracker.occluded == 0
        np.testing.assert_array_equal(mask, sim.gt_mask("obj0"))

    def test_empty_initial_mask(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        with pytest.raises(TrackLost):
            OracleTracker(sim).initialize(np.zeros((96, 96, 1), dtype=np.uint8))

    def test_dilation_is_superset(self, three_object_scene, sim_config):
        sim = TabletopSim(sim_config)
        sim.reset(three_object_scene)
        gt = sim.gt_mask("obj2")
        tracker = OracleTracker(sim, corruption=TrackerCorruption(dilate=2))
        mask = tracker.initialize(gt)
        assert np.all(mask[gt > 0] == 1)
        assert mask.sum() > gt.sum()


class TestRemoteClient:
    def test_segment_round_trip(self):
        mask = np.zeros((16, 16, 1), dtype=np.uint8)
        mask[4:9, 2:6] = 1
        session = FakeSession([FakeResponse({"mask": mask_to_png_base64(mask)})])
        client = PerceptionClient("http://perception.local/", session=session)
        out = client.segment(np.zeros((16, 16, 3), dtype=np.uint8), BBox(x1=2, y1=4, x2=6, y2=9))
        np.testing.assert_array_equal(out, mask)
        url, payload = session.calls[0]
        assert url == "http://perception.local/segment"
        assert payload["bbox"] == [2, 4, 6, 9]

    def test_retries_then_succeeds(self):
        session = FakeSession([
            requests.ConnectionError("refused"),
            FakeResponse({"tokens": [[0.0, 1.0]] * 4, "grid": [2, 2]}),
        ])
        client = PerceptionClient("http://perception.local", max_retries=1, session=session)
        grid = client.encode(np.zeros((16, 16, 3), dtype=np.uint8))
        assert grid.grid == (2, 2)
        assert len(session.calls) == 2

    def test_gives_up(self):
        session = FakeSession([FakeResponse({}, status=500)] * 3)
        client = PerceptionClient("http://perception.local", max_retries=2, session=session)
        with pytest.raises(RemoteServiceError):
            client.track("s", np.zeros((8, 8, 3), dtype=np.uint8))

    def test_requires_endpoint(self):
        with pytest.raises(RemoteServiceError):
            PerceptionClient("")
