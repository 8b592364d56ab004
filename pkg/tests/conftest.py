import numpy as np
import pytest
import requests

from dexgrasp.schema.config import ControllerConfig, DiTConfig, EncoderSpec, SimConfig
from dexgrasp.schema.manifest import DatasetManifest
from dexgrasp.schema.observation import Observation
from dexgrasp.schema.scene import PALETTE, ObjectSpec, SceneSpec, Shape
from dexgrasp.sim.collect import collect_demos
from dexgrasp.sim.distribution import object_tags


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance runs, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# --- builders ----------------------------------------------------------------

def make_object(object_id: str, color: str, shape: str, x: float, y: float, size: float = 0.035) -> ObjectSpec:
    return ObjectSpec(
        object_id=object_id,
        shape=Shape(shape),
        color=PALETTE[color],
        size=size,
        pose=(x, y, 0.0),
        tags=object_tags(color, shape),
    )


def make_plate(x: float, y: float, size: float = 0.1) -> ObjectSpec:
    return ObjectSpec(
        object_id="plate",
        shape=Shape.CIRCLE,
        color=PALETTE["blue"],
        size=size,
        pose=(x, y, 0.0),
        graspable=False,
        tags=["blue", "plate", "pushable"],
    )


def tiny_controller_config(patch_side: int = 8, d_model: int = 16, horizon: int = 4,
                           train_timesteps: int = 10) -> ControllerConfig:
    return ControllerConfig(
        dit=DiTConfig(d_model=d_model, layers=1, heads=2, attn_dropout=0.0, horizon=horizon, action_dim=4),
        head_encoder=EncoderSpec(patch_side=patch_side, output_dim=16, weight_seed=1),
        wrist_encoder=EncoderSpec(patch_side=patch_side, output_dim=16, weight_seed=2),
        train_timesteps=train_timesteps,
        inference_steps=train_timesteps,
        execute_steps=2,
        chunk_budget=3,
    )


def random_observation(side: int, rng: np.random.Generator) -> Observation:
    mask = np.zeros((side, side, 1), dtype=np.uint8)
    mask[side // 4:side // 2, side // 4:side // 2] = 1
    return Observation(
        head_rgb=rng.integers(0, 256, (side, side, 3), dtype=np.uint8),
        wrist_rgb=rng.integers(0, 256, (side, side, 3), dtype=np.uint8),
        proprio=rng.uniform(0.0, 1.0, 4).astype(np.float32),
        mask=mask,
    )


# --- fixtures ----------------------------------------------------------------

@pytest.fixture
def sim_config():
    return SimConfig()


@pytest.fixture
def three_object_scene():
    """Red circle (left), green square (centre), blue bar (right); none blocked."""
    return SceneSpec(
        objects=[
            make_object("obj0", "red", "circle", 0.25, 0.5),
            make_object("obj1", "green", "square", 0.5, 0.5),
            make_object("obj2", "blue", "bar", 0.75, 0.5),
        ],
        rng_seed=3,
    )


@pytest.fixture
def tiny_controller():
    return tiny_controller_config()


@pytest.fixture
def tiny_manifest():
    return DatasetManifest(
        episode_count=1,
        image_resolution=(32, 32),
        state_dim=4,
        action_dim=4,
        action_min=[0.0] * 4,
        action_max=[1.0] * 4,
        action_mean=[0.5] * 4,
        action_std=[0.3] * 4,
        state_mean=[0.5] * 4,
        state_std=[0.3] * 4,
    )


@pytest.fixture(scope="session")
def recorded_dataset(tmp_path_factory):
    """Three expert grasp episodes at the default 96 px resolution."""
    out = tmp_path_factory.mktemp("demos")
    collect_demos(3, task_kind="grasp", out_dir=out, seed=0)
    return out


# --- HTTP fakes --------------------------------------------------------------

class FakeResponse:
    def __init__(self, body: dict, status: int = 200):
        self.body = body
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"status {self.status}")

    def json(self):
        return self.body


class FakeSession:
    """Stands in for requests.Session; items are responses or exceptions to raise."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, timeout=None):
        self.calls.append((url, json))
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item
