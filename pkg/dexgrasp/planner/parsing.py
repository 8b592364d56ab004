"""
Total parsers for planner responses.

Every function either returns a value or raises a DexGraspError subclass;
no input string crashes them.
"""

import json
import re

from ..errors import InvalidBBox, NoCandidate, UnparseableResponse
from ..schema.observation import BBox

_BOOL_RE = re.compile(r"\b(true|false)\b", re.IGNORECASE)
_NONE_RE = re.compile(r"^\W*none\b", re.IGNORECASE)


def parse_bool(text: str) -> bool:
    """Last standalone 'true'/'false' in the text, case-insensitive."""
    if not isinstance(text, str):
        raise UnparseableResponse(f"Expected text, got {type(text).__name__}")
    matches = _BOOL_RE.findall(text)
    if not matches:
        raise UnparseableResponse(f"No boolean verdict in: {text[:80]!r}")
    return matches[-1].lower() == "true"


def reasoning_of(text: str) -> str:
    """Response text with the trailing verdict line removed."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if lines and _BOOL_RE.fullmatch(lines[-1].strip().strip(".")):
        lines = lines[:-1]
    return "\n".join(lines)


def _balanced_blocks(text: str):
    """Yield every top-level {...} substring, honouring JSON string quoting."""
    depth, start, in_str, escape = 0, None, False, False
    for i, ch in enumerate(text):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"' and depth > 0:
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start:i + 1]


def extract_json(text: str, key: str = "bbox_2d") -> dict:
    """First balanced-brace block that parses as a JSON object containing `key`."""
    if not isinstance(text, str):
        raise UnparseableResponse(f"Expected text, got {type(text).__name__}")
    for block in _balanced_blocks(text):
        try:
            obj = json.loads(block)
        except (json.JSONDecodeError, RecursionError):
            continue
        if isinstance(obj, dict) and key in obj:
            return obj
    raise UnparseableResponse(f"No JSON object with {key!r} in: {text[:80]!r}")


def parse_bbox(text: str, width: int | None = None, height: int | None = None) -> tuple[BBox, str]:
    """(BBox, label) from a response holding {"bbox_2d": [x1, y1, x2, y2], ...}."""
    obj = extract_json(text, "bbox_2d")
    coords = obj["bbox_2d"]
    if not isinstance(coords, list) or len(coords) != 4:
        raise UnparseableResponse(f"bbox_2d must be a list of 4 numbers: {coords!r}")
    values = []
    for c in coords:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or c != c or c in (float("inf"), float("-inf")):
            raise UnparseableResponse(f"bbox_2d has a non-numeric entry: {coords!r}")
        values.append(int(round(c)))
    x1, y1, x2, y2 = values
    if x2 <= x1 or y2 <= y1 or x1 < 0 or y1 < 0:
        raise InvalidBBox(f"Invalid bbox {values}")
    bbox = BBox(x1=x1, y1=y1, x2=x2, y2=y2)
    if width is not None and height is not None:
        bbox.check_within(width, height)
    label = obj.get("label", "")
    return bbox, label if isinstance(label, str) else str(label)


def parse_instruction(text: str) -> str:
    """First non-empty line, unquoted; 'none' means nothing left to grasp."""
    if not isinstance(text, str):
        raise UnparseableResponse(f"Expected text, got {type(text).__name__}")
    for line in text.strip().splitlines():
        line = line.strip().strip('"').strip()
        if not line:
            continue
        if _NONE_RE.match(line):
            raise NoCandidate("Planner reports no object to grasp")
        return line
    raise UnparseableResponse("Empty instruction")
