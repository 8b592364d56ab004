"""
Benchmark suites.

Suites are checked in as small JSON recipes (`suites/<name>.json`): a seed
plus groups of trials drawn from a scene distribution. `expand_recipe`
turns a recipe into the full list of scenes deterministically; an expanded
suite can also be saved and reloaded as JSON.

Usage:
    suite = load_suite("suites/unseen_lighting")
"""

import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..schema.config import SimConfig
from ..schema.eval import BenchmarkSuite, SuiteEntry
from ..schema.scene import PALETTE
from ..sim.collect import pick_target
from ..sim.distribution import SceneDistribution

logger = logging.getLogger(__name__)

SUITES_DIR = Path(__file__).resolve().parents[2] / "suites"

# Category word used in prompts → the shape carrying that tag.
CATEGORY_SHAPES: dict[str, str] = {
    "fruit": "circle",
    "snack": "square",
    "bottle": "bar",
    "toy": "triangle",
}


class RecipeGroup(BaseModel):
    label: str
    trials: int
    distribution: SceneDistribution = Field(default_factory=SceneDistribution)
    prompts: list[str] = []
    conditions: dict[str, str] = {}

    @field_validator("trials")
    @classmethod
    def validate_trials(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"Group needs at least one trial: {v}")
        return v


class SuiteRecipe(BaseModel):
    """Seeded description of a suite; small enough to check in."""

    name: str
    kind: str = "grasp"
    seed: int
    k_max: int = 3
    groups: list[RecipeGroup]


def _prompt_distribution(template: str, dist: SceneDistribution, rng: np.random.Generator) -> tuple[str, SceneDistribution]:
    """Fill a prompt template and require two matching objects in the scene."""
    if "{color}" in template:
        color = str(rng.choice(sorted(PALETTE)))
        return template.format(color=color), dist.model_copy(update={"required_colors": [color, color]})
    if "{category}" in template:
        category = str(rng.choice(sorted(CATEGORY_SHAPES)))
        shape = CATEGORY_SHAPES[category]
        plural = category + "s"
        return template.format(category=plural), dist.model_copy(update={"required_shapes": [shape, shape]})
    return template, dist


def expand_recipe(recipe: SuiteRecipe, config: SimConfig | None = None) -> BenchmarkSuite:
    """Every trial draws from its own rng keyed by (seed, group, index)."""
    config = config or SimConfig()
    entries = []
    for g, group in enumerate(recipe.groups):
        for i in range(group.trials):
            rng = np.random.default_rng([recipe.seed, g, i])
            conditions = {"group": group.label, "objects": group.distribution.combos, **group.conditions}
            if recipe.kind == "long_horizon":
                template = group.prompts[i % len(group.prompts)] if group.prompts else "clear the table"
                prompt, dist = _prompt_distribution(template, group.distribution, rng)
                scene = dist.sample(rng, config)
                target = None
            else:
                scene = group.distribution.sample(rng, config)
                target = pick_target(scene, recipe.kind, rng)
                prompt = f"Grasp the {scene.object(target).describe()}."
            conditions |= {"background": scene.background.kind.value, "lighting": scene.lighting.kind.value}
            entries.append(SuiteEntry(
                trial_id=f"{group.label}-{i:04d}",
                scene=scene,
                prompt=prompt,
                target_object_id=target,
                conditions=conditions,
                k_max=recipe.k_max,
            ))
    logger.info("expanded suite %s: %d entries", recipe.name, len(entries))
    return BenchmarkSuite(name=recipe.name, kind=recipe.kind, seed=recipe.seed, entries=entries)


def resolve_suite_path(name_or_path: str | Path) -> Path:
    """Accept `suites/x`, `suites/x.json`, or a bare recipe name."""
    path = Path(name_or_path)
    for candidate in (path, path.with_suffix(".json"), SUITES_DIR / path.name, SUITES_DIR / f"{path.name}.json"):
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"No suite at {name_or_path}")


def load_suite(name_or_path: str | Path, config: SimConfig | None = None) -> BenchmarkSuite:
    """Load an expanded suite, or expand a recipe."""
    text = resolve_suite_path(name_or_path).read_text()
    if '"entries"' in text:
        return BenchmarkSuite.model_validate_json(text)
    return expand_recipe(SuiteRecipe.model_validate_json(text), config)


def save_suite(path: str | Path, suite: BenchmarkSuite) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(suite.model_dump_json(indent=2))
    return path
