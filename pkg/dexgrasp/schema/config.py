"""
Configuration sections. Each is a pydantic model with desk-scale defaults;
`dexgrasp.config.RunConfig` composes them.
"""

from enum import Enum

from pydantic import BaseModel, Field, field_validator, model_validator


class SimConfig(BaseModel):
    """World constants for the tabletop simulator (world units in [0, 1])."""

    image_size: int = 96
    delta_max: float = 0.08
    g_close: float = 0.3
    z_low: float = 0.2
    r_grasp: float = 0.05
    z_lift: float = 0.8
    lift_steps: int = 10
    max_steps: int = 75
    table: tuple[float, float, float, float] = (0.1, 0.1, 0.9, 0.9)
    home: tuple[float, float, float, float] = (0.5, 0.0, 1.0, 1.0)
    bin_xy: tuple[float, float] = (0.96, 0.96)
    min_separation: float = 0.12
    gripper_radius: float = 0.09
    push_radius: float = 0.02
    overhang_fraction: float = 0.4
    z_hover: float = 0.4
    z_grasp: float = 0.05
    placement_retries: int = 200

    @field_validator("image_size")
    @classmethod
    def validate_image_size(cls, v: int) -> int:
        if v < 8:
            raise ValueError(f"Image size too small: {v}")
        return v

    def workspace_pixels(self) -> tuple[int, int, int, int]:
        """Table region as a pixel rectangle (x1, y1, x2, y2) in the head view."""
        x0, y0, x1, y1 = self.table
        n = self.image_size
        return (
            int(round(x0 * n)),
            int(round((1.0 - y1) * n)),
            int(round(x1 * n)),
            int(round((1.0 - y0) * n)),
        )


class EncoderKind(str, Enum):
    FROZEN_PATCH = "frozen_patch"
    TRAINABLE_PATCH = "trainable_patch"
    ADAPTER = "adapter"


class EncoderSpec(BaseModel):
    """Image feature extractor description."""

    kind: EncoderKind = EncoderKind.FROZEN_PATCH
    patch_side: int = 8
    output_dim: int = 128
    weight_seed: int = 0
    frozen: bool = True
    standardize: bool = True
    layers: int = 0

    @model_validator(mode="after")
    def check_frozen(self) -> "EncoderSpec":
        """frozen_patch encoders are always frozen; trainable ones never are."""
        if self.kind == EncoderKind.FROZEN_PATCH and not self.frozen:
            raise ValueError("frozen_patch encoder must have frozen=True")
        if self.kind == EncoderKind.TRAINABLE_PATCH and self.frozen:
            raise ValueError("trainable_patch encoder cannot be frozen")
        return self

    def num_tokens(self, image_side: int) -> int:
        return (image_side // self.patch_side) ** 2


class DiTConfig(BaseModel):
    """Diffusion transformer dimensions."""

    d_model: int = 128
    layers: int = 4
    heads: int = 4
    attn_dropout: float = 0.1
    horizon: int = 16
    action_dim: int = 4

    @model_validator(mode="after")
    def check_heads(self) -> "DiTConfig":
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        return self


class ControllerConfig(BaseModel):
    dit: DiTConfig = Field(default_factory=DiTConfig)
    head_encoder: EncoderSpec = Field(default_factory=lambda: EncoderSpec(weight_seed=1))
    wrist_encoder: EncoderSpec = Field(default_factory=lambda: EncoderSpec(weight_seed=2))
    state_dim: int = 4
    mask_layers: int = 1
    mask_seed: int = 3
    train_timesteps: int = 50
    inference_steps: int = 16
    execute_steps: int = 4
    chunk_budget: int = 20

    @model_validator(mode="after")
    def check_steps(self) -> "ControllerConfig":
        if self.inference_steps > self.train_timesteps:
            raise ValueError("inference_steps cannot exceed train_timesteps")
        if not 1 <= self.execute_steps <= self.dit.horizon:
            raise ValueError("execute_steps must lie in [1, horizon]")
        if self.head_encoder.patch_side != self.wrist_encoder.patch_side:
            raise ValueError("head and wrist encoders must share a patch grid")
        return self

    def condition_length(self, image_side: int) -> int:
        """Observation tokens plus the timestep token."""
        return (
            1
            + self.head_encoder.num_tokens(image_side)
            + self.wrist_encoder.num_tokens(image_side)
            + 1
        )


class JitterParams(BaseModel):
    """Maximum color-jitter deltas; all zero disables augmentation."""

    brightness: float = 0.3
    contrast: float = 0.3
    saturation: float = 0.3
    hue: float = 0.05

    @field_validator("brightness", "contrast", "saturation")
    @classmethod
    def validate_delta(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"Jitter delta out of range: {v}")
        return v

    @field_validator("hue")
    @classmethod
    def validate_hue(cls, v: float) -> float:
        if not 0.0 <= v <= 0.5:
            raise ValueError(f"Hue delta out of range: {v}")
        return v


class TrainConfig(BaseModel):
    epochs: int = 50
    lr: float = 1e-4
    warmup_steps: int = 2000
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.95, 0.999)
    batch_size: int = 32
    seed: int = 42
    encoder_kind: EncoderKind = EncoderKind.FROZEN_PATCH
    encoder_trainable: bool = False
    immiscible: bool = True
    jitter: JitterParams = Field(default_factory=JitterParams)
    num_workers: int = 0
    deterministic: bool = True
    max_steps: int | None = None
    save_every: int = 1000
    bf16: bool = False
    device: str = "cpu"

    @field_validator("encoder_kind")
    @classmethod
    def validate_encoder_kind(cls, v: EncoderKind) -> EncoderKind:
        if v == EncoderKind.ADAPTER:
            raise ValueError("Remote encoders cannot be trained through")
        return v


class PlannerConfig(BaseModel):
    backend: str = "oracle"
    endpoint: str | None = None
    model: str = "qwen2.5-vl-72b-instruct"
    timeout_s: float = 60.0
    max_retries: int = 2
    temperature: float = 0.0
    max_attempts_per_instruction: int = 3
    max_instructions: int = 10

    @field_validator("backend")
    @classmethod
    def validate_backend(cls, v: str) -> str:
        if v not in ("oracle", "chat"):
            raise ValueError(f"Unknown planner backend: {v}")
        return v


class PerceptionConfig(BaseModel):
    endpoint: str | None = None
    timeout_s: float = 30.0
    max_occluded_frames: int = 5


class EvalConfig(BaseModel):
    k_max: int = 3
    jobs: int = 1
    bbox_slack_px: int = 2
