"""
Diffusion transformer that predicts the noise in an action chunk.

Action tokens attend to each other (bidirectional self-attention) and to the
condition sequence [observation tokens ∥ timestep token] through
cross-attention. Blocks are pre-norm with residual connections.
"""

import torch
from torch import nn

from ..schema.config import DiTConfig
from .attention import AttentionHook, FeedForward, MultiHeadAttention, init_weights, sinusoidal_embedding


class TimestepEmbedder(nn.Module):
    """Sinusoidal step features followed by a 2-layer MLP."""

    def __init__(self, d_model: int):
        super().__init__()
        self.d_model = d_model
        self.mlp = nn.Sequential(nn.Linear(d_model, d_model), nn.SiLU(), nn.Linear(d_model, d_model))

    def forward(self, k: torch.Tensor) -> torch.Tensor:
        features = sinusoidal_embedding(k, self.d_model).to(self.mlp[0].weight.dtype)
        return self.mlp(features)


class DiTBlock(nn.Module):
    def __init__(self, config: DiTConfig):
        super().__init__()
        d = config.d_model
        self.norm1 = nn.LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, config.heads, config.attn_dropout)
        self.norm2 = nn.LayerNorm(d)
        self.norm_cond = nn.LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, config.heads, config.attn_dropout)
        self.norm3 = nn.LayerNorm(d)
        self.mlp = FeedForward(d, 4 * d)

    def forward(self, x: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        x = x + self.self_attn(self.norm1(x))
        x = x + self.cross_attn(self.norm2(x), self.norm_cond(condition))
        return x + self.mlp(self.norm3(x))


class ActionDenoiser(nn.Module):
    """ε-prediction network: (x_k [B,H,D_a], k [B], condition [B,L,D]) → ε̂ [B,H,D_a]."""

    def __init__(self, config: DiTConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.action_in = nn.Linear(config.action_dim, d)
        self.action_pos = nn.Parameter(torch.zeros(1, config.horizon, d))
        self.time_embed = TimestepEmbedder(d)
        self.blocks = nn.ModuleList(DiTBlock(config) for _ in range(config.layers))
        self.norm_out = nn.LayerNorm(d)
        self.action_out = nn.Linear(d, config.action_dim)

        self.apply(init_weights)
        nn.init.trunc_normal_(self.action_pos, std=0.02)
        nn.init.zeros_(self.action_out.weight)
        nn.init.zeros_(self.action_out.bias)

    def forward(self, x_k: torch.Tensor, k: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        b, h, d_a = x_k.shape
        if h != self.config.horizon or d_a != self.config.action_dim:
            raise ValueError(
                f"Chunk shape {(h, d_a)} does not match ({self.config.horizon}, {self.config.action_dim})"
            )
        if condition.shape[0] != b or condition.shape[-1] != self.config.d_model:
            raise ValueError(f"Condition shape {tuple(condition.shape)} incompatible with batch {b}")
        tokens = self.action_in(x_k) + self.action_pos
        step_token = self.time_embed(k.reshape(-1).expand(b) if k.numel() == 1 else k)[:, None, :]
        cond = torch.cat([condition, step_token.to(condition.dtype)], dim=1)
        for block in self.blocks:
            tokens = block(tokens, cond)
        return self.action_out(self.norm_out(tokens))

    def set_cross_attention_hook(self, factory) -> None:
        """Install factory(layer_index) → hook on every cross-attention; None removes them."""
        for i, block in enumerate(self.blocks):
            block.cross_attn.hook = None if factory is None else factory(i)

    def set_self_attention_hook(self, hook: AttentionHook | None) -> None:
        for block in self.blocks:
            block.self_attn.hook = hook
