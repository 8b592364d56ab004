"""
Squared-cosine ("squaredcos_cap_v2") DDPM noise schedule and forward noising.

Indexing: betas[k-1] is β_k for k = 1..T; alpha_bars[k] is ᾱ_k for
k = 0..T with alpha_bars[0] = 1. Coefficients α_k = √ᾱ_k and σ_k = √(1 − ᾱ_k).
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import DiffusionStepOutOfRange

MAX_BETA = 0.999
COSINE_OFFSET = 0.008


def _alpha_bar_fn(t: float) -> float:
    return math.cos((t + COSINE_OFFSET) / (1 + COSINE_OFFSET) * math.pi / 2) ** 2


@dataclass(frozen=True)
class NoiseSchedule:
    train_timesteps: int
    betas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def alpha_sq(self) -> np.ndarray:
        return self.alpha_bars

    @property
    def sigma_sq(self) -> np.ndarray:
        return 1.0 - self.alpha_bars

    @property
    def alphas(self) -> np.ndarray:
        return np.sqrt(self.alpha_sq)

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq)

    def check_step(self, k) -> None:
        k_arr = np.asarray(k.detach().cpu() if isinstance(k, torch.Tensor) else k)
        if k_arr.size and (k_arr.min() < 0 or k_arr.max() > self.train_timesteps):
            raise DiffusionStepOutOfRange(f"Step {k_arr.tolist()} outside [0, {self.train_timesteps}]")

    def alpha(self, k: int) -> float:
        self.check_step(k)
        return float(self.alphas[k])

    def sigma(self, k: int) -> float:
        self.check_step(k)
        return float(self.sigmas[k])

    def coefficients(self, k: torch.Tensor, like: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-item (α_k, σ_k) broadcastable against `like` ([B, ...])."""
        self.check_step(k)
        idx = k.detach().cpu().long().numpy()
        shape = (-1,) + (1,) * (like.ndim - 1)
        alpha = torch.as_tensor(self.alphas[idx], dtype=like.dtype, device=like.device).reshape(shape)
        sigma = torch.as_tensor(self.sigmas[idx], dtype=like.dtype, device=like.device).reshape(shape)
        return alpha, sigma


def build_schedule(train_timesteps: int) -> NoiseSchedule:
    """β_k = min(1 − ᾱ(k/T)/ᾱ((k−1)/T), 0.999); alpha_bars = cumprod(1 − β)."""
    if train_timesteps < 1:
        raise ValueError(f"train_timesteps must be at least 1, got {train_timesteps}")
    T = train_timesteps
    betas = np.array(
        [min(1.0 - _alpha_bar_fn(k / T) / _alpha_bar_fn((k - 1) / T), MAX_BETA) for k in range(1, T + 1)],
        dtype=np.float64,
    )
    alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(train_timesteps=T, betas=betas, alpha_bars=alpha_bars)


def forward_noise(chunk, eps, k, schedule: NoiseSchedule):
    """x_k = α_k·A + σ_k·ε for numpy arrays (scalar k) or torch batches (k per item)."""
    if isinstance(chunk, torch.Tensor):
        if not isinstance(k, torch.Tensor):
            k = torch.full((chunk.shape[0],), int(k), dtype=torch.long)
        alpha, sigma = schedule.coefficients(k, chunk)
        return alpha * chunk + sigma * eps
    schedule.check_step(k)
    return schedule.alphas[k] * np.asarray(chunk) + schedule.sigmas[k] * np.asarray(eps)


def reconstruct(x_k, eps, k, schedule: NoiseSchedule):
    """Inverse of forward_noise: A = (x_k − σ_k·ε)/α_k."""
    schedule.check_step(k)
    return (np.asarray(x_k) - schedule.sigmas[k] * np.asarray(eps)) / schedule.alphas[k]
