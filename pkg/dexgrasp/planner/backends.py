"""
Planner backends. A backend turns one rendered sub-task request into raw
response text; parsing happens in the planner, identically for every backend.

- OracleBackend answers from simulator ground truth with templated text.
- ChatBackend posts the request to an HTTP chat endpoint.
- ReplayBackend returns the raw responses of a recorded transcript in order.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import requests

from ..errors import RemoteServiceError
from ..schema.config import PlannerConfig
from ..schema.planner import PlannerTranscript
from ..sim.world import TabletopSim
from .predicates import (
    instruction_for,
    parse_prompt,
    rank_candidates,
    remaining,
    resolve_instruction,
    object_matches_instruction,
)

logger = logging.getLogger(__name__)


@dataclass
class SubtaskRequest:
    subtask: str
    prompt_text: str
    parts: list[dict] = field(default_factory=list)
    fields: dict[str, str] = field(default_factory=dict)
    images: dict[str, np.ndarray] = field(default_factory=dict)


class PlannerBackend(Protocol):
    name: str

    def complete(self, request: SubtaskRequest) -> str: ...


class OracleBackend:
    """Answers sub-tasks from the live simulator state."""

    name = "oracle"

    def __init__(self, sim: TabletopSim):
        self.sim = sim

    def complete(self, request: SubtaskRequest) -> str:
        handler = getattr(self, f"_{request.subtask}")
        return handler(request.fields)

    def _propose_instruction(self, fields: dict[str, str]) -> str:
        predicate = parse_prompt(fields["user_prompt"])
        ranked = rank_candidates(self.sim.state, predicate)
        if not ranked:
            return "None"
        return instruction_for(self.sim.state, ranked[0])

    def _predict_bbox(self, fields: dict[str, str]) -> str:
        obj = resolve_instruction(self.sim.state, fields["grasping_instruction"])
        if obj is None:
            return "The described object is not visible."
        bbox = self.sim.gt_bbox(obj.object_id)
        return json.dumps({
            "bbox_2d": bbox.as_list(),
            "label": obj.describe(),
            "description": f"A {obj.describe()} on the table.",
        })

    def _verify_grasp(self, fields: dict[str, str]) -> str:
        state = self.sim.state
        held = state.scene.object(state.held_object) if state.held_object else None
        if held is not None and object_matches_instruction(held, fields["grasping_instruction"]):
            return f"The {held.describe()} is securely held in the robotic hand.\n\nTrue"
        return "The target object is not held in the robotic hand.\n\nFalse"

    def _check_completion(self, fields: dict[str, str]) -> str:
        predicate = parse_prompt(fields["user_prompt"])
        left = remaining(self.sim.state, predicate)
        if not left:
            return f"All {predicate.describe()} objects have been removed from the table: True."
        return f"{len(left)} relevant objects remain on the table.\n\nOutput: False"


class ChatBackend:
    """POST {endpoint}/chat with {model, messages, temperature}."""

    name = "chat"

    def __init__(self, endpoint: str, model: str, timeout_s: float = 60.0, max_retries: int = 2,
                 temperature: float = 0.0, session: requests.Session | None = None):
        if not endpoint:
            raise RemoteServiceError("No planner endpoint configured (set PLANNER_ENDPOINT)")
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.temperature = temperature
        self.session = session or requests.Session()

    @classmethod
    def from_config(cls, config: PlannerConfig) -> "ChatBackend":
        return cls(
            endpoint=config.endpoint or os.environ.get("PLANNER_ENDPOINT", ""),
            model=config.model,
            timeout_s=config.timeout_s,
            max_retries=config.max_retries,
            temperature=config.temperature,
        )

    def payload(self, request: SubtaskRequest) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": request.parts}],
            "temperature": self.temperature,
        }

    def complete(self, request: SubtaskRequest) -> str:
        url = f"{self.endpoint}/chat"
        last_error = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self.session.post(url, json=self.payload(request), timeout=self.timeout_s)
                response.raise_for_status()
                return _response_text(response.json())
            except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as e:
                last_error = e
                logger.warning("%s: chat call failed (attempt %d): %s", request.subtask, attempt + 1, e)
        raise RemoteServiceError(f"Chat endpoint failed after {self.max_retries + 1} attempts: {last_error}")


def _response_text(body: dict) -> str:
    """Accept {"content": ...}, {"message": {"content": ...}} or OpenAI-style choices."""
    if "content" in body:
        return str(body["content"])
    if "message" in body:
        return str(body["message"]["content"])
    return str(body["choices"][0]["message"]["content"])


class ReplayBackend:
    """Feeds back a transcript's raw responses, checking the sub-task order."""

    name = "replay"

    def __init__(self, transcript: PlannerTranscript):
        self.responses = [r for r in transcript.records if r.subtask is not None]
        self.position = 0

    def complete(self, request: SubtaskRequest) -> str:
        if self.position >= len(self.responses):
            raise RemoteServiceError("Replay transcript exhausted")
        record = self.responses[self.position]
        if record.subtask != request.subtask:
            raise RemoteServiceError(f"Replay expected {record.subtask}, got {request.subtask}")
        self.position += 1
        return record.raw_response


def build_backend(config: PlannerConfig, sim: TabletopSim) -> PlannerBackend:
    if config.backend == "chat":
        return ChatBackend.from_config(config)
    return OracleBackend(sim)
