"""
Deterministic DDIM sampling (η = 0) with clipped x̂₀ and ᾱ = 1 at the end.
"""

from typing import Callable

import numpy as np
import torch

from .schedule import NoiseSchedule

DenoiseFn = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


def ddim_timesteps(train_timesteps: int, n_steps: int) -> list[int]:
    """n uniformly spaced steps in {1..T}, descending (steps_offset 0)."""
    if not 1 <= n_steps <= train_timesteps:
        raise ValueError(f"n_steps must lie in [1, {train_timesteps}], got {n_steps}")
    ratio = train_timesteps // n_steps
    return [i * ratio + 1 for i in range(n_steps)][::-1]


def ddim_sample(
    denoise: DenoiseFn,
    condition: torch.Tensor,
    schedule: NoiseSchedule,
    n_steps: int,
    shape: tuple[int, ...],
    generator: torch.Generator | None = None,
    x_T: torch.Tensor | None = None,
    on_step: Callable[[int, int], None] | None = None,
) -> torch.Tensor:
    """Denoise from Gaussian noise; returns a normalized chunk in [-1, 1].

    `x_T` overrides the initial noise; `on_step(i, k)` fires before each
    denoiser call.
    """
    dtype = condition.dtype
    device = condition.device
    if x_T is None:
        x = torch.randn(shape, generator=generator, dtype=dtype, device="cpu" if generator is None
                        else generator.device).to(device)
    else:
        x = x_T.to(device=device, dtype=dtype)
    steps = ddim_timesteps(schedule.train_timesteps, n_steps)
    for i, k in enumerate(steps):
        prev = steps[i + 1] if i + 1 < len(steps) else 0
        if on_step is not None:
            on_step(i, k)
        k_batch = torch.full((shape[0],), k, dtype=torch.long, device=device)
        eps = denoise(x, k_batch, condition)
        alpha, sigma = float(schedule.alphas[k]), float(schedule.sigmas[k])
        x0 = ((x - sigma * eps) / alpha).clamp(-1.0, 1.0)
        alpha_prev, sigma_prev = float(np.sqrt(schedule.alpha_bars[prev])), float(np.sqrt(1.0 - schedule.alpha_bars[prev]))
        x = alpha_prev * x0 + sigma_prev * eps
    return x
