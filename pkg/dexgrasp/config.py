"""
Run configuration.

Config files are flat dotted-key text, one assignment per line:

    # desk preset
    training.lr = 0.0001
    controller.dit.layers = 4
    planner.backend = "oracle"

Values are parsed as JSON literals and fall back to bare strings.
Precedence: defaults < file < command-line overrides. Environment variables
only fill planner/perception endpoints that neither source set.
"""

import json
import logging
import os
import subprocess
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, get_args

from pydantic import BaseModel, Field

from . import __version__
from .schema.config import (
    ControllerConfig,
    EvalConfig,
    PerceptionConfig,
    PlannerConfig,
    SimConfig,
    TrainConfig,
)

logger = logging.getLogger(__name__)

RESOLVED_NAME = "resolved_config.json"


class RunConfig(BaseModel):
    """Every section a subcommand may read, fully resolved."""

    sim: SimConfig = Field(default_factory=SimConfig)
    perception: PerceptionConfig = Field(default_factory=PerceptionConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)


def parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _model_of(annotation) -> type[BaseModel] | None:
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    for arg in get_args(annotation):
        found = _model_of(arg)
        if found is not None:
            return found
    return None


def check_key(key: str, model: type[BaseModel] = RunConfig) -> None:
    """Raise ValueError unless `key` names a field path of the config tree."""
    parts = key.split(".")
    for i, part in enumerate(parts):
        if part not in model.model_fields:
            raise ValueError(f"Unknown config key: {key}")
        sub = _model_of(model.model_fields[part].annotation)
        if i < len(parts) - 1:
            if sub is None:
                raise ValueError(f"Unknown config key: {key}")
            model = sub


def set_dotted(tree: dict, key: str, value: Any) -> None:
    node = tree
    *parents, leaf = key.split(".")
    for part in parents:
        node = node.setdefault(part, {})
    node[leaf] = value


def parse_assignments(lines: list[str], source: str = "<overrides>") -> dict[str, Any]:
    """`key = value` lines → {dotted key: value}; blank lines and `#` comments skipped."""
    out = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        check_key(key)
        out[key] = parse_value(value)
    return out


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    return parse_assignments(path.read_text().splitlines(), str(path))


def _env_endpoints(tree: dict, env: dict[str, str]) -> None:
    planner = tree.setdefault("planner", {})
    perception = tree.setdefault("perception", {})
    if env.get("PLANNER_ENDPOINT") and "endpoint" not in planner:
        planner["endpoint"] = env["PLANNER_ENDPOINT"]
    if env.get("PLANNER_MODEL") and "model" not in planner:
        planner["model"] = env["PLANNER_MODEL"]
    if env.get("PLANNER_TIMEOUT_S") and "timeout_s" not in planner:
        planner["timeout_s"] = float(env["PLANNER_TIMEOUT_S"])
    if env.get("PERCEPTION_ENDPOINT") and "endpoint" not in perception:
        perception["endpoint"] = env["PERCEPTION_ENDPOINT"]


def load_run_config(
    path: str | Path | None = None,
    overrides: list[str] | dict[str, Any] | None = None,
    env: dict[str, str] | None = None,
) -> RunConfig:
    """Resolve defaults, config file, overrides and endpoint env vars into a RunConfig."""
    assignments: dict[str, Any] = {}
    if path is not None:
        assignments.update(read_config_file(path))
    if isinstance(overrides, dict):
        for key in overrides:
            check_key(key)
        assignments.update(overrides)
    elif overrides:
        assignments.update(parse_assignments(overrides))

    tree: dict = {}
    for key, value in assignments.items():
        set_dotted(tree, key, value)
    _env_endpoints(tree, os.environ if env is None else env)
    return RunConfig.model_validate(tree)


def version_stamp() -> str:
    """`git describe --always --dirty`, or the package version outside a checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else __version__


def write_resolved_config(out_dir: str | Path, config: RunConfig, command: str, extra: dict | None = None) -> Path:
    """<out>/resolved_config.json: the config, the command and a version stamp."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "version": version_stamp(),
        "written_at": datetime.now(timezone.utc).isoformat(),
        "config": config.model_dump(mode="json"),
        **(extra or {}),
    }
    path = out_dir / RESOLVED_NAME
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
    logger.debug("wrote %s", path)
    return path


def load_resolved_config(path: str | Path) -> RunConfig:
    """Rebuild the RunConfig from a resolved_config.json (or its directory)."""
    path = Path(path)
    if path.is_dir():
        path = path / RESOLVED_NAME
    with open(path) as f:
        return RunConfig.model_validate(json.load(f)["config"])
