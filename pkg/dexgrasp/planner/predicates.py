"""
Prompt predicates and ground-truth object selection for the oracle planner.

Supported prompt families:
    "clear the table"
    "grasp all <color> objects"
    "grasp all <category>"        (plural or singular, e.g. "grasp all fruits")
"""

import re
from dataclasses import dataclass

import numpy as np

from ..schema.scene import PALETTE, ObjectSpec
from ..sim.world import SimState

SIDES = ("right", "center", "left")
NOUNS = ("circle", "square", "triangle", "bar", "plate")

_INSTRUCTION_RE = re.compile(
    r"grasp the (?P<color>\w+) (?P<noun>\w+)(?: on the (?P<side>right|center|left))?", re.IGNORECASE
)


def singularize(word: str) -> str:
    word = word.lower()
    if word.endswith("ies"):
        return word[:-3] + "y"
    if word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


@dataclass(frozen=True)
class PromptPredicate:
    kind: str
    value: str | None = None

    def matches(self, obj: ObjectSpec) -> bool:
        if self.kind == "all":
            return True
        if self.kind == "color":
            return obj.color_name == self.value
        return self.value in obj.tags

    def describe(self) -> str:
        if self.kind == "all":
            return "target"
        return self.value


def parse_prompt(prompt: str) -> PromptPredicate:
    p = " ".join(prompt.lower().split())
    if "clear the table" in p:
        return PromptPredicate("all")
    m = re.search(r"grasp all (?:the )?(\w+) objects", p)
    if m and m.group(1) in PALETTE:
        return PromptPredicate("color", m.group(1))
    m = re.search(r"grasp all (?:the )?(\w+)", p)
    if m:
        word = m.group(1)
        if word in PALETTE:
            return PromptPredicate("color", word)
        return PromptPredicate("category", singularize(word))
    return PromptPredicate("all")


def side_of(x: float, table: tuple[float, float, float, float]) -> str:
    x0, _, x1, _ = table
    third = (x1 - x0) / 3.0
    if x >= x1 - third:
        return "right"
    if x <= x0 + third:
        return "left"
    return "center"


def is_blocked(state: SimState, obj: ObjectSpec, candidates: list[ObjectSpec]) -> bool:
    """Another object's centre within 1.5 gripper radii."""
    x, y, _ = state.pose_of(obj.object_id)
    limit = 1.5 * state.config.gripper_radius
    for other in candidates:
        if other.object_id == obj.object_id:
            continue
        ox, oy, _ = state.pose_of(other.object_id)
        if np.hypot(x - ox, y - oy) < limit:
            return True
    return False


def remaining(state: SimState, predicate: PromptPredicate) -> list[ObjectSpec]:
    """Objects still on the table that satisfy the prompt."""
    return [o for o in state.on_table() if predicate.matches(o) and (o.graspable or o.pushable)]


def rank_candidates(state: SimState, predicate: PromptPredicate) -> list[ObjectSpec]:
    """Unblocked matches first (all matches if every one is blocked), right to left."""
    matches = remaining(state, predicate)
    on_table = state.on_table()
    free = [o for o in matches if not is_blocked(state, o, on_table)]
    pool = free or matches
    return sorted(pool, key=lambda o: (-state.pose_of(o.object_id)[0], o.object_id))


def instruction_for(state: SimState, obj: ObjectSpec) -> str:
    x = state.pose_of(obj.object_id)[0]
    return f"Grasp the {obj.describe()} on the {side_of(x, state.config.table)} of the table."


def parse_instruction_target(text: str) -> tuple[str | None, str | None, str | None]:
    """(color, noun, side) named by an instruction sentence, if recognizable."""
    m = _INSTRUCTION_RE.search(text)
    if not m:
        return None, None, None
    color = m.group("color").lower()
    noun = singularize(m.group("noun"))
    side = m.group("side").lower() if m.group("side") else None
    return (color if color in PALETTE else None), (noun if noun in NOUNS else None), side


def object_matches_instruction(obj: ObjectSpec, text: str) -> bool:
    color, noun, _ = parse_instruction_target(text)
    if color is None or noun is None:
        return False
    return obj.describe() == f"{color} {noun}"


def resolve_instruction(state: SimState, text: str, include_held: bool = False) -> ObjectSpec | None:
    """Object on the table best matching an instruction; side breaks ties."""
    _, _, side = parse_instruction_target(text)
    pool = state.on_table()
    if include_held and state.held_object is not None:
        pool = pool + [state.scene.object(state.held_object)]
    matches = [o for o in pool if object_matches_instruction(o, text)]
    if not matches:
        return None

    def key(o: ObjectSpec):
        x = state.pose_of(o.object_id)[0]
        return (side is not None and side_of(x, state.config.table) != side, -x, o.object_id)

    return sorted(matches, key=key)[0]
