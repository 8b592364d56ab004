"""
Patch encoders for head and wrist images.

The frozen encoder standardizes every patch jointly over its p·p·3 values,
projects it with a seeded linear map and adds fixed 2D sinusoidal position
features. A global affine change of brightness (aI + b, a > 0) therefore
leaves its tokens unchanged.
"""

import functools
import hashlib
import logging

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from torch import nn

from ..controller.attention import EncoderBlock, pick_heads, sinusoidal_2d
from ..errors import WrongResolution
from ..schema.config import EncoderKind, EncoderSpec

logger = logging.getLogger(__name__)

STD_EPS = 1e-10
FLAT_PATCH_STD = 1e-8


class FeatureGrid(BaseModel):
    """L×D token matrix laid out on a rows×cols patch grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    tokens: np.ndarray
    grid: tuple[int, int]
    source: str = "head"

    @field_validator("tokens")
    @classmethod
    def validate_tokens(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 2:
            raise ValueError(f"Tokens must be L×D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("Tokens contain non-finite values")
        return v

    @field_validator("source")
    @classmethod
    def validate_source(cls, v: str) -> str:
        if v not in ("head", "wrist", "mask"):
            raise ValueError(f"Unknown feature source: {v}")
        return v

    @model_validator(mode="after")
    def check_grid(self) -> "FeatureGrid":
        if self.grid[0] * self.grid[1] != self.tokens.shape[0]:
            raise ValueError(f"Grid {self.grid} does not match {self.tokens.shape[0]} tokens")
        return self


def patchify(images: torch.Tensor, patch: int) -> torch.Tensor:
    """[B, H, W, C] → [B, (H/p)·(W/p), p·p·C], patches in row-major order."""
    b, h, w, c = images.shape
    gh, gw = h // patch, w // patch
    x = images.reshape(b, gh, patch, gw, patch, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b, gh * gw, patch * patch * c)


def standardize_patches(patches: torch.Tensor) -> torch.Tensor:
    """Zero-mean, unit-std per patch; flat patches map to zeros."""
    mean = patches.mean(dim=-1, keepdim=True)
    std = patches.std(dim=-1, keepdim=True, unbiased=False)
    normed = (patches - mean) / (std + STD_EPS)
    return torch.where(std > FLAT_PATCH_STD, normed, torch.zeros_like(normed))


class PatchEncoder(nn.Module):
    """Linear patch embedding, optionally followed by transformer blocks."""

    def __init__(self, spec: EncoderSpec, image_side: int, in_channels: int = 3):
        super().__init__()
        if image_side % spec.patch_side:
            raise WrongResolution(f"Image side {image_side} not divisible by patch {spec.patch_side}")
        self.spec = spec
        self.image_side = image_side
        self.grid = image_side // spec.patch_side
        in_dim = spec.patch_side * spec.patch_side * in_channels
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(spec.weight_seed)
            self.proj = nn.Linear(in_dim, spec.output_dim)
            with torch.no_grad():
                self.proj.weight.normal_(0.0, 1.0 / np.sqrt(in_dim))
                self.proj.bias.zero_()
            self.blocks = nn.ModuleList(
                EncoderBlock(spec.output_dim, pick_heads(spec.output_dim)) for _ in range(spec.layers)
            )
        self.register_buffer("pos", sinusoidal_2d(self.grid, self.grid, spec.output_dim).float(), persistent=False)
        if spec.frozen:
            self.requires_grad_(False)

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid

    def check_resolution(self, images: torch.Tensor) -> None:
        if images.ndim != 4 or images.shape[1] != self.image_side or images.shape[2] != self.image_side:
            raise WrongResolution(
                f"Expected [B, {self.image_side}, {self.image_side}, C] images, got {tuple(images.shape)}"
            )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """[B, H, W, C] pixel values in [0, 255] → [B, L, D] tokens."""
        self.check_resolution(images)
        x = patchify(images.to(self.proj.weight.dtype), self.spec.patch_side)
        if self.spec.standardize:
            x = standardize_patches(x)
        else:
            x = x / 127.5 - 1.0
        tokens = self.proj(x) + self.pos.to(x.dtype)
        for block in self.blocks:
            tokens = block(tokens)
        return tokens


def build_encoder(spec: EncoderSpec, image_side: int, client=None) -> nn.Module:
    """Encoder module for a spec; adapter kinds forward to a remote service."""
    if spec.kind == EncoderKind.ADAPTER:
        from .remote import PerceptionClient, RemoteEncoder

        return RemoteEncoder(client or PerceptionClient.from_env(), spec, image_side)
    return PatchEncoder(spec, image_side)


@functools.lru_cache(maxsize=16)
def _cached_encoder(spec_json: str, image_side: int) -> PatchEncoder:
    encoder = PatchEncoder(EncoderSpec.model_validate_json(spec_json), image_side).double()
    return encoder.eval()


def encode(image: np.ndarray, spec: EncoderSpec, image_side: int | None = None, source: str = "head") -> FeatureGrid:
    """Encode one H×W×3 image (uint8 or float) at float64 precision."""
    image = np.asarray(image)
    side = image_side or image.shape[0]
    if image.ndim != 3 or image.shape[0] != side or image.shape[1] != side:
        raise WrongResolution(f"Expected {side}×{side} image, got {image.shape}")
    encoder = _cached_encoder(spec.model_dump_json(), side)
    with torch.no_grad():
        tokens = encoder(torch.from_numpy(image.astype(np.float64))[None])[0]
    return FeatureGrid(tokens=tokens.numpy(), grid=(encoder.grid, encoder.grid), source=source)


def parameter_hash(module: nn.Module) -> str:
    """sha256 over every named parameter's bytes, in name order."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
