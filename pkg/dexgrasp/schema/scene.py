"""
Schemas for simulator scenes: objects, backgrounds and lighting.
"""

from enum import Enum

from pydantic import BaseModel, Field, field_validator, model_validator

# Palette values are all even so a 0.5 lighting gain maps them to exact integers.
PALETTE: dict[str, tuple[int, int, int]] = {
    "red": (230, 40, 40),
    "green": (40, 180, 60),
    "blue": (40, 80, 220),
    "yellow": (230, 210, 40),
    "orange": (240, 140, 30),
    "purple": (140, 60, 180),
    "pink": (240, 120, 180),
    "cyan": (40, 200, 210),
}

# Category tags implied by shape; "food" groups the edible analogs.
SHAPE_CATEGORIES: dict[str, list[str]] = {
    "circle": ["fruit", "food"],
    "square": ["snack", "food"],
    "bar": ["bottle"],
    "triangle": ["toy"],
}

MIN_GRASP_SIZE = 0.02
MAX_GRASP_SIZE = 0.08
MAX_OBJECTS = 9


class Shape(str, Enum):
    CIRCLE = "circle"
    SQUARE = "square"
    TRIANGLE = "triangle"
    BAR = "bar"


class Background(str, Enum):
    WHITE = "white"
    CHECKER = "checker"
    COLORFUL_CLOTH = "colorful_cloth"
    WOOD = "wood"


class Lighting(str, Enum):
    WHITE = "white"
    DIM = "dim"
    LAMP = "lamp"
    DISCO = "disco"


LIGHTING_DEFAULTS: dict[Lighting, dict] = {
    Lighting.WHITE: {"gain": 1.0, "tint": (1.0, 1.0, 1.0), "hue_rate": 0.0},
    Lighting.DIM: {"gain": 0.5, "tint": (1.0, 1.0, 1.0), "hue_rate": 0.0},
    Lighting.LAMP: {"gain": 0.9, "tint": (1.0, 0.8, 0.55), "hue_rate": 0.0},
    Lighting.DISCO: {"gain": 0.85, "tint": (1.0, 1.0, 1.0), "hue_rate": 0.35},
}

BACKGROUND_DEFAULTS: dict[Background, int] = {
    Background.WHITE: 0,
    Background.CHECKER: 6,
    Background.COLORFUL_CLOTH: 8,
    Background.WOOD: 5,
}


class ObjectSpec(BaseModel):
    """A rigid tabletop object."""

    object_id: str
    shape: Shape
    color: tuple[int, int, int]
    size: float
    pose: tuple[float, float, float]
    graspable: bool = True
    tags: list[str] = []

    @field_validator("color")
    @classmethod
    def validate_color(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        """Ensure 8-bit channels."""
        if any(not 0 <= c <= 255 for c in v):
            raise ValueError(f"Color channel out of range: {v}")
        return v

    @field_validator("tags")
    @classmethod
    def normalize_tags(cls, v: list[str]) -> list[str]:
        return [t.strip().lower() for t in v if t.strip()]

    @model_validator(mode="after")
    def check_size(self) -> "ObjectSpec":
        """Graspable objects must fit the gripper."""
        if self.size <= 0:
            raise ValueError(f"Object size must be positive: {self.size}")
        if self.graspable and not MIN_GRASP_SIZE <= self.size <= MAX_GRASP_SIZE:
            raise ValueError(
                f"Graspable object {self.object_id} size {self.size} outside "
                f"[{MIN_GRASP_SIZE}, {MAX_GRASP_SIZE}]"
            )
        return self

    @property
    def pushable(self) -> bool:
        return "pushable" in self.tags

    @property
    def color_name(self) -> str | None:
        for tag in self.tags:
            if tag in PALETTE:
                return tag
        return None

    def describe(self) -> str:
        """Short human label, e.g. 'green square'."""
        name = self.color_name or "colored"
        noun = "plate" if "plate" in self.tags else self.shape.value
        return f"{name} {noun}"


class BackgroundSpec(BaseModel):
    kind: Background = Background.WHITE
    scale: int | None = None

    @model_validator(mode="after")
    def fill_defaults(self) -> "BackgroundSpec":
        if self.scale is None:
            self.scale = BACKGROUND_DEFAULTS[self.kind]
        return self


class LightingSpec(BaseModel):
    """Global per-channel gain; disco rotates the tint every step."""

    kind: Lighting = Lighting.WHITE
    gain: float | None = None
    tint: tuple[float, float, float] | None = None
    hue_rate: float | None = None

    @model_validator(mode="after")
    def fill_defaults(self) -> "LightingSpec":
        defaults = LIGHTING_DEFAULTS[self.kind]
        if self.gain is None:
            self.gain = defaults["gain"]
        if self.tint is None:
            self.tint = defaults["tint"]
        if self.hue_rate is None:
            self.hue_rate = defaults["hue_rate"]
        if self.gain <= 0:
            raise ValueError(f"Lighting gain must be positive: {self.gain}")
        return self


class SceneSpec(BaseModel):
    """Everything needed to reproduce one tabletop scene."""

    background: BackgroundSpec = Field(default_factory=BackgroundSpec)
    lighting: LightingSpec = Field(default_factory=LightingSpec)
    objects: list[ObjectSpec] = []
    rng_seed: int = 0

    @model_validator(mode="after")
    def check_unique_ids(self) -> "SceneSpec":
        ids = [o.object_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Duplicate object ids: {ids}")
        return self

    def object(self, object_id: str) -> ObjectSpec | None:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        return None

    def with_conditions(
        self,
        background: Background | None = None,
        lighting: Lighting | None = None,
    ) -> "SceneSpec":
        """Copy of this scene under another background and/or lighting."""
        update = {}
        if background is not None:
            update["background"] = BackgroundSpec(kind=background)
        if lighting is not None:
            update["lighting"] = LightingSpec(kind=lighting)
        return self.model_copy(update=update)
