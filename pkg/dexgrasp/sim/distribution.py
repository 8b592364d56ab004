"""
Seeded scene generators for demonstrations and evaluation conditions.
"""

import itertools

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from ..schema.config import SimConfig
from ..schema.scene import (
    MAX_OBJECTS,
    PALETTE,
    SHAPE_CATEGORIES,
    Background,
    BackgroundSpec,
    Lighting,
    LightingSpec,
    ObjectSpec,
    SceneSpec,
    Shape,
)
from .world import place_objects

# Color×shape pairs never shown in demonstrations ("unseen objects").
HELD_OUT_COMBOS: frozenset[tuple[str, str]] = frozenset({
    ("red", "triangle"),
    ("blue", "bar"),
    ("green", "circle"),
    ("yellow", "square"),
    ("purple", "bar"),
    ("cyan", "circle"),
    ("orange", "triangle"),
    ("pink", "square"),
})

ALL_COMBOS: list[tuple[str, str]] = [(c, s.value) for c, s in itertools.product(PALETTE, Shape)]


def object_tags(color: str, shape: str) -> list[str]:
    return [color, shape] + SHAPE_CATEGORIES[shape]


class SceneDistribution(BaseModel):
    """A family of scenes: object count, combo pool, backgrounds and lightings."""

    name: str = "demo"
    n_objects: tuple[int, int] = (6, 6)
    combos: str = "seen"
    backgrounds: list[Background] = [Background.WHITE]
    lightings: list[Lighting] = [Lighting.WHITE]
    size_range: tuple[float, float] = (0.03, 0.045)
    pushable_target: bool = False
    plate_size: tuple[float, float] = (0.09, 0.11)
    required_colors: list[str] = []
    required_shapes: list[str] = []

    @field_validator("combos")
    @classmethod
    def validate_combos(cls, v: str) -> str:
        if v not in ("seen", "unseen", "all"):
            raise ValueError(f"Unknown combo pool: {v}")
        return v

    @model_validator(mode="after")
    def check_counts(self) -> "SceneDistribution":
        lo, hi = self.n_objects
        if not 0 <= lo <= hi <= MAX_OBJECTS:
            raise ValueError(f"Object count range out of bounds: {self.n_objects}")
        if len(self.required_colors) + len(self.required_shapes) > lo:
            raise ValueError("More required objects than the minimum object count")
        return self

    def combo_pool(self) -> list[tuple[str, str]]:
        if self.combos == "seen":
            return [c for c in ALL_COMBOS if c not in HELD_OUT_COMBOS]
        if self.combos == "unseen":
            return sorted(HELD_OUT_COMBOS)
        return list(ALL_COMBOS)

    def _pick(self, rng: np.random.Generator, color: str | None = None, shape: str | None = None) -> tuple[str, str]:
        pool = self.combo_pool()
        if color is not None:
            pool = [c for c in pool if c[0] == color] or [(color, str(rng.choice([s.value for s in Shape])))]
        if shape is not None:
            pool = [c for c in pool if c[1] == shape] or [(str(rng.choice(list(PALETTE))), shape)]
        return pool[int(rng.integers(len(pool)))]

    def sample(self, rng: np.random.Generator, config: SimConfig | None = None) -> SceneSpec:
        """Draw one scene; poses satisfy the table and separation constraints."""
        config = config or SimConfig()
        lo, hi = self.n_objects
        count = int(rng.integers(lo, hi + 1))
        picks = [self._pick(rng, color=c) for c in self.required_colors]
        picks += [self._pick(rng, shape=s) for s in self.required_shapes]
        while len(picks) < count:
            picks.append(self._pick(rng))

        objects = []
        for i, (color, shape) in enumerate(picks):
            objects.append(ObjectSpec(
                object_id=f"obj{i}",
                shape=Shape(shape),
                color=PALETTE[color],
                size=float(rng.uniform(*self.size_range)),
                pose=(-1.0, -1.0, float(rng.uniform(0.0, 2 * np.pi))),
                tags=object_tags(color, shape),
            ))
        if self.pushable_target:
            color = str(rng.choice(list(PALETTE)))
            objects.append(ObjectSpec(
                object_id="plate",
                shape=Shape.CIRCLE,
                color=PALETTE[color],
                size=float(rng.uniform(*self.plate_size)),
                pose=(-1.0, -1.0, 0.0),
                graspable=False,
                tags=[color, "plate", "pushable"],
            ))

        poses = place_objects(objects, [o.pose for o in objects], rng, config)
        objects = [o.model_copy(update={"pose": p}) for o, p in zip(objects, poses)]
        background = self.backgrounds[int(rng.integers(len(self.backgrounds)))]
        lighting = self.lightings[int(rng.integers(len(self.lightings)))]
        return SceneSpec(
            background=BackgroundSpec(kind=background),
            lighting=LightingSpec(kind=lighting),
            objects=objects,
            rng_seed=int(rng.integers(2**31 - 1)),
        )


DEMO_DISTRIBUTION = SceneDistribution(name="demo")
NONPREHENSILE_DISTRIBUTION = SceneDistribution(name="nonprehensile", n_objects=(3, 4), pushable_target=True)
