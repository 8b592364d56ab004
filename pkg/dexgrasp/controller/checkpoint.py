"""
Checkpoint directories.

    <ckpt>/config            controller config, image side, parameter counts (JSON)
    <ckpt>/manifest          dataset manifest used for normalization (JSON)
    <ckpt>/shapes            parameter name → shape table (JSON)
    <ckpt>/params/<name>.dgt one tensor file per state-dict entry
    <ckpt>/train_state/      optional: optimizer moments, LR schedule, RNG states
"""

import json
import logging
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..errors import CheckpointMismatch
from ..schema.config import ControllerConfig
from ..schema.manifest import DatasetManifest
from ..storage.tensor_file import read_tensor, write_tensor
from .policy import DiffusionGraspPolicy

logger = logging.getLogger(__name__)


def _tensor_dtype(t: torch.Tensor) -> str:
    if t.dtype == torch.uint8:
        return "u8"
    if t.dtype in (torch.int64, torch.int32, torch.bool):
        return "i64"
    return "f32"


def _write(path: Path, t: torch.Tensor) -> None:
    arr = t.detach().cpu()
    dtype = _tensor_dtype(arr)
    data = arr.numpy() if dtype != "f32" else arr.to(torch.float32).numpy()
    write_tensor(path, dtype, tuple(arr.shape), data)


def _read(path: Path) -> torch.Tensor:
    _, _, data = read_tensor(path)
    return torch.from_numpy(np.ascontiguousarray(data))


def save_checkpoint(directory: str | Path, policy: DiffusionGraspPolicy) -> Path:
    directory = Path(directory)
    params_dir = directory / "params"
    params_dir.mkdir(parents=True, exist_ok=True)

    state = policy.state_dict()
    shapes = {name: list(t.shape) for name, t in state.items()}
    for name, tensor in state.items():
        _write(params_dir / f"{name}.dgt", tensor)

    config = {
        "controller": policy.config.model_dump(mode="json"),
        "image_side": policy.image_side,
        "parameter_counts": policy.parameter_counts(),
    }
    (directory / "config").write_text(json.dumps(config, indent=2, sort_keys=True))
    (directory / "manifest").write_text(policy.manifest.model_dump_json(indent=2))
    (directory / "shapes").write_text(json.dumps(shapes, indent=2, sort_keys=True))
    logger.info("saved checkpoint to %s (%d tensors)", directory, len(state))
    return directory


def read_checkpoint_config(directory: str | Path) -> tuple[ControllerConfig, DatasetManifest, int]:
    directory = Path(directory)
    for name in ("config", "manifest", "shapes"):
        if not (directory / name).exists():
            raise CheckpointMismatch(f"Checkpoint {directory} lacks '{name}'")
    config = json.loads((directory / "config").read_text())
    manifest = DatasetManifest.model_validate_json((directory / "manifest").read_text())
    return ControllerConfig.model_validate(config["controller"]), manifest, int(config["image_side"])


def load_checkpoint(directory: str | Path, device: str = "cpu") -> DiffusionGraspPolicy:
    """Rebuild the policy and load parameters; the shape table must match exactly."""
    directory = Path(directory)
    controller, manifest, image_side = read_checkpoint_config(directory)
    policy = DiffusionGraspPolicy(controller, manifest, image_side)
    load_parameters(policy, directory)
    return policy.to(device)


def load_parameters(policy: nn.Module, directory: str | Path) -> None:
    directory = Path(directory)
    shapes = json.loads((directory / "shapes").read_text())
    expected = {name: list(t.shape) for name, t in policy.state_dict().items()}
    if shapes != expected:
        missing = sorted(set(expected) - set(shapes))
        extra = sorted(set(shapes) - set(expected))
        differing = sorted(n for n in set(shapes) & set(expected) if shapes[n] != expected[n])
        raise CheckpointMismatch(f"Shape table mismatch: missing={missing} extra={extra} differing={differing}")
    state = {}
    for name, shape in shapes.items():
        path = directory / "params" / f"{name}.dgt"
        if not path.exists():
            raise CheckpointMismatch(f"Missing parameter file {path.name}")
        tensor = _read(path)
        if list(tensor.shape) != shape:
            raise CheckpointMismatch(f"{name}: file shape {list(tensor.shape)} != table {shape}")
        state[name] = tensor
    policy.load_state_dict(state, strict=True)


# --- training state ----------------------------------------------------------

def save_train_state(
    directory: str | Path,
    optimizer: torch.optim.Optimizer,
    scheduler,
    generator: torch.Generator,
    progress: dict,
) -> None:
    """Optimizer moments, LR schedule, RNG states and loop counters."""
    root = Path(directory) / "train_state"
    (root / "optim").mkdir(parents=True, exist_ok=True)
    opt_state = optimizer.state_dict()
    index = {}
    for param_id, slots in opt_state["state"].items():
        for key, value in slots.items():
            if isinstance(value, torch.Tensor):
                _write(root / "optim" / f"{param_id}.{key}.dgt", value)
                index.setdefault(str(param_id), []).append(key)
    _write(root / "torch_rng.dgt", torch.get_rng_state())
    _write(root / "generator_rng.dgt", generator.get_state())
    meta = {
        "param_groups": opt_state["param_groups"],
        "slots": index,
        "scheduler": scheduler.state_dict(),
        "progress": progress,
    }
    (root / "state.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_train_state(
    directory: str | Path,
    optimizer: torch.optim.Optimizer,
    scheduler,
    generator: torch.Generator,
) -> dict:
    """Restore what save_train_state wrote; returns the loop counters."""
    root = Path(directory) / "train_state"
    if not (root / "state.json").exists():
        raise CheckpointMismatch(f"No training state under {directory}")
    meta = json.loads((root / "state.json").read_text())
    device = optimizer.param_groups[0]["params"][0].device
    state = {}
    for param_id, keys in meta["slots"].items():
        slots = {}
        for key in keys:
            t = _read(root / "optim" / f"{param_id}.{key}.dgt")
            slots[key] = t if key == "step" else t.to(device)
        state[int(param_id)] = slots
    optimizer.load_state_dict({"state": state, "param_groups": meta["param_groups"]})
    scheduler.load_state_dict(meta["scheduler"])
    torch.set_rng_state(_read(root / "torch_rng.dgt").to(torch.uint8))
    generator.set_state(_read(root / "generator_rng.dgt").to(torch.uint8))
    return meta["progress"]
