"""
The grasping policy: encoders → mask encoder → fusion → DiT → DDIM.
"""

import logging

import numpy as np
import torch
from torch import nn

from ..perception.encoder import build_encoder
from ..schema.config import ControllerConfig
from ..schema.manifest import DatasetManifest
from ..schema.observation import ActionChunk, Observation
from .denoiser import ActionDenoiser
from .fusion import MaskEncoder, ObservationFusion
from .sampling import ddim_sample
from .schedule import build_schedule

logger = logging.getLogger(__name__)


class DiffusionGraspPolicy(nn.Module):
    """Maps an observation batch to normalized action chunks."""

    def __init__(self, config: ControllerConfig, manifest: DatasetManifest, image_side: int | None = None):
        super().__init__()
        image_side = image_side or manifest.image_resolution[0]
        if config.dit.action_dim != manifest.action_dim:
            raise ValueError(f"DiT action_dim {config.dit.action_dim} != dataset D_a {manifest.action_dim}")
        if config.state_dim != manifest.state_dim:
            raise ValueError(f"state_dim {config.state_dim} != dataset D_s {manifest.state_dim}")
        self.config = config
        self.manifest = manifest
        self.image_side = image_side
        self.schedule = build_schedule(config.train_timesteps)

        self.head_encoder = build_encoder(config.head_encoder, image_side)
        self.wrist_encoder = build_encoder(config.wrist_encoder, image_side)
        head_dim = config.head_encoder.output_dim
        self.mask_encoder = MaskEncoder(
            image_side, config.head_encoder.patch_side, head_dim, config.mask_layers, config.mask_seed
        )
        self.fusion = ObservationFusion(head_dim, config.wrist_encoder.output_dim, config.state_dim, config.dit.d_model)
        self.denoiser = ActionDenoiser(config.dit)

        self.register_buffer("state_mean", torch.tensor(manifest.state_mean, dtype=torch.float32), persistent=False)
        std = np.asarray(manifest.state_std, dtype=np.float64)
        self.register_buffer("state_scale", torch.tensor(np.where(std > 0, std, 1.0), dtype=torch.float32),
                             persistent=False)

    # --- conditioning --------------------------------------------------------

    def encode_observation(self, head: torch.Tensor, wrist: torch.Tensor, mask: torch.Tensor,
                           state: torch.Tensor) -> torch.Tensor:
        """Fused observation tokens [B, 1 + L_h + L_w, D_model].

        `state` must already be standardized.
        """
        z_head = self.head_encoder(head)
        z_wrist = self.wrist_encoder(wrist)
        z_mask = self.mask_encoder(mask)
        return self.fusion(z_head, z_mask, z_wrist, state.to(z_head.dtype))

    def standardize_state(self, proprio: torch.Tensor) -> torch.Tensor:
        return (proprio - self.state_mean.to(proprio.dtype)) / self.state_scale.to(proprio.dtype)

    def forward(self, x_k: torch.Tensor, k: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        return self.denoiser(x_k, k, condition)

    # --- inference -----------------------------------------------------------

    def observation_batch(self, observation: Observation) -> dict[str, torch.Tensor]:
        device = next(self.denoiser.parameters()).device
        proprio = torch.from_numpy(np.asarray(observation.proprio, dtype=np.float32))[None].to(device)
        return {
            "head_rgb": torch.from_numpy(observation.head_rgb)[None].to(device),
            "wrist_rgb": torch.from_numpy(observation.wrist_rgb)[None].to(device),
            "mask": torch.from_numpy(observation.mask)[None].to(device),
            "state": self.standardize_state(proprio),
        }

    @torch.no_grad()
    def sample(self, condition: torch.Tensor, generator: torch.Generator | None = None,
               n_steps: int | None = None, x_T: torch.Tensor | None = None, on_step=None) -> torch.Tensor:
        shape = (condition.shape[0], self.config.dit.horizon, self.config.dit.action_dim)
        return ddim_sample(self.denoiser, condition, self.schedule, n_steps or self.config.inference_steps,
                           shape, generator, x_T, on_step)

    @torch.no_grad()
    def predict_chunk(self, observation: Observation, generator: torch.Generator | None = None,
                      start_step: int = 0, on_step=None) -> ActionChunk:
        """One observation → denormalized action chunk of length H."""
        was_training = self.training
        self.eval()
        batch = self.observation_batch(observation)
        condition = self.encode_observation(batch["head_rgb"], batch["wrist_rgb"], batch["mask"], batch["state"])
        normalized = self.sample(condition, generator, on_step=on_step)[0].double().cpu().numpy()
        self.train(was_training)
        actions = self.manifest.denormalize_actions(normalized).astype(np.float32)
        return ActionChunk(actions=actions, start_step=start_step)

    # --- bookkeeping ---------------------------------------------------------

    def frozen_modules(self) -> dict[str, nn.Module]:
        out = {}
        for name in ("head_encoder", "wrist_encoder"):
            spec = getattr(self.config, name)
            if spec.frozen:
                out[name] = getattr(self, name)
        return out

    def parameter_counts(self) -> dict[str, int]:
        trainable = sum(p.numel() for p in self.parameters() if p.requires_grad)
        frozen = sum(p.numel() for p in self.parameters() if not p.requires_grad)
        return {"trainable": trainable, "frozen": frozen, "total": trainable + frozen}
