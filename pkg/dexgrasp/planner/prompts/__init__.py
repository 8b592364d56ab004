"""
The four planner prompt templates, shipped as text assets.

Placeholders: <user_prompt>, <grasping_instruction> (text) and
<initial_head_image>, <current_head_image>, <current_wrist_image> (images).
"""

import re
from functools import lru_cache
from pathlib import Path

import numpy as np

from ...utils.imaging import png_base64

PROMPT_DIR = Path(__file__).parent
SUBTASKS = ("propose_instruction", "predict_bbox", "verify_grasp", "check_completion")
TEXT_FIELDS = ("user_prompt", "grasping_instruction")
IMAGE_FIELDS = ("initial_head_image", "current_head_image", "current_wrist_image")

_IMAGE_RE = re.compile(r"<(" + "|".join(IMAGE_FIELDS) + r")>")


@lru_cache(maxsize=None)
def load_template(subtask: str) -> str:
    if subtask not in SUBTASKS:
        raise KeyError(f"Unknown planner sub-task: {subtask}")
    return (PROMPT_DIR / f"{subtask}.txt").read_text()


def render_text(subtask: str, fields: dict[str, str], suffix: str = "") -> str:
    """Template with text placeholders filled; image placeholders stay as tags."""
    text = load_template(subtask)
    for name in TEXT_FIELDS:
        if name in fields:
            text = text.replace(f"<{name}>", fields[name])
    return text.rstrip("\n") + (f"\n\n{suffix}" if suffix else "") + "\n"


def render_parts(text: str, images: dict[str, np.ndarray]) -> list[dict]:
    """Split rendered text at image tags into chat content parts."""
    parts: list[dict] = []
    pos = 0
    for m in _IMAGE_RE.finditer(text):
        if m.start() > pos:
            parts.append({"type": "text", "text": text[pos:m.start()]})
        name = m.group(1)
        if name in images:
            parts.append({"type": "image", "image": png_base64(images[name])})
        else:
            parts.append({"type": "text", "text": m.group(0)})
        pos = m.end()
    if pos < len(text):
        parts.append({"type": "text", "text": text[pos:]})
    return parts
