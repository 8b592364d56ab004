"""
Mask encoder and observation fusion.
"""

import torch
from torch import nn

from ..errors import ShapeMismatch, WrongResolution
from ..perception.encoder import patchify
from .attention import EncoderBlock, init_weights, pick_heads, sinusoidal_2d


class MaskEncoder(nn.Module):
    """Randomly initialized patch transformer over the binary target mask.

    Output tokens align one-to-one with the head encoder's patch grid.
    """

    def __init__(self, image_side: int, patch_side: int, output_dim: int, layers: int = 1, seed: int = 3):
        super().__init__()
        if image_side % patch_side:
            raise WrongResolution(f"Image side {image_side} not divisible by patch {patch_side}")
        self.image_side = image_side
        self.patch_side = patch_side
        self.grid = image_side // patch_side
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.proj = nn.Linear(patch_side * patch_side, output_dim)
            self.blocks = nn.ModuleList(
                EncoderBlock(output_dim, pick_heads(output_dim)) for _ in range(layers)
            )
            self.apply(init_weights)
            nn.init.normal_(self.proj.weight, std=1.0 / patch_side)
        self.register_buffer("pos", sinusoidal_2d(self.grid, self.grid, output_dim).float(), persistent=False)

    def forward(self, mask: torch.Tensor) -> torch.Tensor:
        """[B, H, W, 1] mask in {0, 1} → [B, L, D_h]."""
        if mask.ndim != 4 or mask.shape[1] != self.image_side or mask.shape[2] != self.image_side:
            raise WrongResolution(f"Expected [B, {self.image_side}, {self.image_side}, 1] mask, got {tuple(mask.shape)}")
        x = patchify(mask.to(self.proj.weight.dtype), self.patch_side)
        tokens = self.proj(x) + self.pos.to(x.dtype)
        for block in self.blocks:
            tokens = block(tokens)
        return tokens


def projector(d_in: int, d_model: int) -> nn.Sequential:
    """2-layer MLP with hidden width d_model."""
    return nn.Sequential(nn.Linear(d_in, d_model), nn.GELU(), nn.Linear(d_model, d_model))


class ObservationFusion(nn.Module):
    """[s̃ ; h̃ tokens ; w̃ tokens] from head, mask, wrist features and proprio."""

    def __init__(self, head_dim: int, wrist_dim: int, state_dim: int, d_model: int):
        super().__init__()
        self.head_dim = head_dim
        self.head_mlp = projector(2 * head_dim, d_model)
        self.wrist_mlp = projector(wrist_dim, d_model)
        self.state_mlp = projector(state_dim, d_model)
        self.apply(init_weights)

    def forward(self, z_head: torch.Tensor, z_mask: torch.Tensor, z_wrist: torch.Tensor,
                state: torch.Tensor) -> torch.Tensor:
        if z_head.shape[:2] != z_mask.shape[:2]:
            raise ShapeMismatch(f"Head grid {tuple(z_head.shape)} and mask grid {tuple(z_mask.shape)} differ")
        head = self.head_mlp(torch.cat([z_head, z_mask], dim=-1))
        wrist = self.wrist_mlp(z_wrist)
        proprio = self.state_mlp(state)[:, None, :]
        return torch.cat([proprio, head, wrist], dim=1)
