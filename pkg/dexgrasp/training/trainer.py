"""
Diffusion training loop for the grasp controller.

Per item: a uniform step k in {1..T}, Gaussian noise assigned to chunks by
`immiscible_assign`, x_k = α_k·A + σ_k·ε, and an MSE loss on the predicted
noise. AdamW with linear warmup then cosine decay to zero.
"""

import functools
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from ..controller.checkpoint import load_parameters, load_train_state, save_checkpoint, save_train_state
from ..controller.policy import DiffusionGraspPolicy
from ..controller.schedule import NoiseSchedule, forward_noise
from ..errors import DimensionMismatch, FrozenEncoderModified, NonFiniteLoss
from ..perception.encoder import parameter_hash
from ..schema.config import ControllerConfig, EncoderKind, TrainConfig
from ..storage.manifest import load_manifest
from .dataset import ChunkDataset, EpochBatchSampler, worker_seed
from .immiscible import immiscible_assign

logger = logging.getLogger(__name__)

CURVE_NAME = "train_curve.csv"


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    batch_offset: int = 0
    running_loss: float = 0.0


def warmup_cosine(step: int, warmup: int, total: int) -> float:
    """LR multiplier: 0 → 1 linearly over `warmup`, then cosine to 0 at `total`."""
    if warmup > total:
        raise ValueError(f"warmup {warmup} exceeds total steps {total}")
    if step < warmup:
        return step / warmup
    if total == warmup:
        return 0.0
    progress = min(1.0, (step - warmup) / (total - warmup))
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def resolve_controller(controller: ControllerConfig, train: TrainConfig) -> ControllerConfig:
    """Apply the encoder ablation chosen in the training config.

    frozen_patch            → encoders as configured (frozen)
    frozen_patch, trainable → same architecture with gradients enabled
    trainable_patch         → one-block encoder on raw pixels, trained from its seed
    """
    def rewrite(spec):
        if train.encoder_kind == EncoderKind.TRAINABLE_PATCH:
            return spec.model_copy(update={
                "kind": EncoderKind.TRAINABLE_PATCH, "frozen": False, "standardize": False, "layers": 1,
            })
        if train.encoder_trainable:
            return spec.model_copy(update={"kind": EncoderKind.TRAINABLE_PATCH, "frozen": False})
        return spec

    if train.encoder_kind == EncoderKind.FROZEN_PATCH and not train.encoder_trainable:
        return controller
    return controller.model_copy(update={
        "head_encoder": rewrite(controller.head_encoder),
        "wrist_encoder": rewrite(controller.wrist_encoder),
    })


def noise_batch(actions: torch.Tensor, schedule: NoiseSchedule, generator: torch.Generator,
                immiscible: bool = True) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(x_k, k, ε) for a batch of normalized chunks [B, H, D_a]."""
    b = actions.shape[0]
    k = torch.randint(1, schedule.train_timesteps + 1, (b,), generator=generator)
    eps = torch.randn(actions.shape, generator=generator, dtype=torch.float32).to(actions.dtype)
    if immiscible:
        perm = immiscible_assign(actions.detach().cpu().numpy(), eps.numpy())
        eps = eps[torch.from_numpy(perm)]
    eps = eps.to(actions.device)
    k = k.to(actions.device)
    return forward_noise(actions, eps, k, schedule), k, eps


def diffusion_loss(
    policy: DiffusionGraspPolicy,
    batch: dict[str, torch.Tensor],
    generator: torch.Generator,
    immiscible: bool = True,
    predict: Callable | None = None,
) -> torch.Tensor:
    """Noise-prediction MSE; `predict(x_k, k, condition, eps)` overrides the denoiser."""
    x_k, k, eps = noise_batch(batch["action"], policy.schedule, generator, immiscible)
    condition = policy.encode_observation(batch["head_rgb"], batch["wrist_rgb"], batch["mask"], batch["state"])
    eps_hat = predict(x_k, k, condition, eps) if predict else policy(x_k, k, condition)
    return F.mse_loss(eps_hat.float(), eps.float())


def train_step(
    policy: DiffusionGraspPolicy,
    batch: dict[str, torch.Tensor],
    optimizer: torch.optim.Optimizer,
    scheduler,
    generator: torch.Generator,
    immiscible: bool = True,
    bf16: bool = False,
) -> float:
    policy.train()
    device_type = batch["action"].device.type
    with torch.autocast(device_type=device_type, dtype=torch.bfloat16, enabled=bf16):
        loss = diffusion_loss(policy, batch, generator, immiscible)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(
            f"Loss became {loss.item()}",
            diagnostics={
                "lr": optimizer.param_groups[0]["lr"],
                "action_abs_max": float(batch["action"].abs().max()),
                "state_abs_max": float(batch["state"].abs().max()),
            },
        )
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    scheduler.step()
    return float(loss.item())


def set_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(deterministic, warn_only=True)
    if torch.backends.cudnn.is_available():
        torch.backends.cudnn.benchmark = not deterministic
        torch.backends.cudnn.deterministic = deterministic


def build_optimizer(policy: torch.nn.Module, config: TrainConfig, total_steps: int):
    params = [p for p in policy.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(params, lr=config.lr, betas=config.betas, weight_decay=config.weight_decay)
    warmup = config.warmup_steps

    def lr_lambda(step: int) -> float:
        return warmup_cosine(step, warmup, total_steps)

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda)
    return optimizer, scheduler


def _seed_worker(base_seed: int, worker_id: int) -> None:
    seed = worker_seed(base_seed, worker_id)
    np.random.seed(seed)
    torch.manual_seed(seed)


def _to_device(batch: dict[str, torch.Tensor], device: str) -> dict[str, torch.Tensor]:
    return {k: v.to(device) for k, v in batch.items()}


def _load_curve(path: Path, before_step: int) -> list[dict]:
    if not path.exists():
        return []
    frame = pd.read_csv(path)
    return frame[frame["step"] < before_step].to_dict("records")


def train(
    dataset_dir: str | Path,
    controller: ControllerConfig,
    config: TrainConfig,
    out_dir: str | Path,
    resume: str | Path | None = None,
    progress: Callable[[int, float, float], None] | None = None,
) -> Path:
    """Train a policy on a recorded dataset; returns the checkpoint directory.

    Writes `<out>/checkpoint/` (parameters and training state) and
    `<out>/train_curve.csv` with columns step, loss, lr.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoint"

    manifest = load_manifest(dataset_dir)
    if manifest.action_dim != controller.dit.action_dim:
        raise DimensionMismatch(f"dataset D_a={manifest.action_dim}, controller {controller.dit.action_dim}")
    if manifest.state_dim != controller.state_dim:
        raise DimensionMismatch(f"dataset D_s={manifest.state_dim}, controller {controller.state_dim}")

    set_determinism(config.seed, config.deterministic)
    controller = resolve_controller(controller, config)
    policy = DiffusionGraspPolicy(controller, manifest).to(config.device)
    frozen_before = {name: parameter_hash(m) for name, m in policy.frozen_modules().items()}
    counts = policy.parameter_counts()
    logger.info("policy parameters: %d trainable, %d frozen", counts["trainable"], counts["frozen"])

    dataset = ChunkDataset(dataset_dir, controller.dit.horizon, config.jitter, config.seed, manifest)
    sampler = EpochBatchSampler(len(dataset), config.batch_size, config.seed)
    steps_per_epoch = math.ceil(len(dataset) / config.batch_size)
    total_steps = config.max_steps or config.epochs * steps_per_epoch
    optimizer, scheduler = build_optimizer(policy, config, total_steps)
    generator = torch.Generator().manual_seed(config.seed)

    state = TrainState()
    curve: list[dict] = []
    if resume is not None:
        load_parameters(policy, resume)
        state = TrainState(**load_train_state(resume, optimizer, scheduler, generator))
        curve = _load_curve(out_dir / CURVE_NAME, state.step)
        logger.info("resumed from %s at step %d (epoch %d)", resume, state.step, state.epoch)

    def checkpoint() -> None:
        save_checkpoint(ckpt_dir, policy)
        save_train_state(ckpt_dir, optimizer, scheduler, generator, asdict(state))
        pd.DataFrame(curve, columns=["step", "loss", "lr"]).to_csv(out_dir / CURVE_NAME, index=False)

    while state.step < total_steps:
        dataset.set_epoch(state.epoch)
        sampler.set_epoch(state.epoch, state.batch_offset)
        loader = DataLoader(
            dataset,
            batch_sampler=sampler,
            num_workers=config.num_workers,
            worker_init_fn=functools.partial(_seed_worker, config.seed),
        )
        for batch in loader:
            lr = optimizer.param_groups[0]["lr"]
            loss = train_step(policy, _to_device(batch, config.device), optimizer, scheduler, generator,
                              config.immiscible, config.bf16)
            curve.append({"step": state.step, "loss": loss, "lr": lr})
            state.step += 1
            state.batch_offset += 1
            state.running_loss = 0.98 * state.running_loss + 0.02 * loss if state.step > 1 else loss
            if progress:
                progress(state.step, loss, lr)
            if config.save_every and state.step % config.save_every == 0:
                checkpoint()
            if state.step >= total_steps:
                break
        if state.batch_offset >= steps_per_epoch:
            state.epoch += 1
            state.batch_offset = 0

    frozen_after = {name: parameter_hash(m) for name, m in policy.frozen_modules().items()}
    changed = [name for name in frozen_before if frozen_before[name] != frozen_after[name]]
    if changed:
        raise FrozenEncoderModified(f"Frozen encoders changed during training: {changed}")

    checkpoint()
    logger.info("training finished at step %d, loss %.5f", state.step, curve[-1]["loss"] if curve else float("nan"))
    return ckpt_dir
