"""
Planner sub-tasks and the grasp-attempt state machine.

    CheckCompletion → Done | ProposeInstruction | Failed
    ProposeInstruction → PredictBBox | Done (nothing left) | Failed
    PredictBBox → Executing | Failed
    Executing → VerifyGrasp
    VerifyGrasp → Place | Reset
    Place → Reset
    Reset → CheckCompletion | PredictBBox (retry) | Failed
"""

import logging
import time
from enum import Enum
from typing import Callable

import numpy as np
from pydantic import BaseModel

from ..controller.rollout import GraspController
from ..errors import DexGraspError, IllegalTransition, InvalidBBox, NoCandidate, UnparseableResponse
from ..schema.observation import BBox
from ..schema.planner import GraspTask, PlannerPhase, PlannerTranscript, TranscriptRecord
from ..sim.world import TabletopSim
from .backends import PlannerBackend, SubtaskRequest
from .parsing import parse_bbox, parse_bool, parse_instruction, reasoning_of
from .prompts import render_parts, render_text
from .workspace import crop_workspace

logger = logging.getLogger(__name__)

P = PlannerPhase

TRANSITIONS: dict[PlannerPhase, frozenset[PlannerPhase]] = {
    P.CHECK_COMPLETION: frozenset({P.PROPOSE_INSTRUCTION, P.DONE, P.FAILED}),
    P.PROPOSE_INSTRUCTION: frozenset({P.PREDICT_BBOX, P.DONE, P.FAILED}),
    P.PREDICT_BBOX: frozenset({P.EXECUTING, P.FAILED}),
    P.EXECUTING: frozenset({P.VERIFY_GRASP}),
    P.VERIFY_GRASP: frozenset({P.PLACE, P.RESET}),
    P.PLACE: frozenset({P.RESET}),
    P.RESET: frozenset({P.CHECK_COMPLETION, P.PREDICT_BBOX, P.FAILED}),
    P.DONE: frozenset(),
    P.FAILED: frozenset(),
}

JSON_NUDGE = "Return only JSON."
BOOL_NUDGE = "End your answer with True or False."
INSTRUCTION_NUDGE = "Answer with one sentence naming the object."

Annotator = Callable[[TranscriptRecord], dict | None]


class RunOutcome(str, Enum):
    DONE = "Done"
    FAILED = "Failed"


class RunLimits(BaseModel):
    max_attempts_per_instruction: int = 3
    max_instructions: int = 10


def check_transition(src: PlannerPhase, dst: PlannerPhase) -> None:
    if dst not in TRANSITIONS[src]:
        raise IllegalTransition(f"{src.value} → {dst.value}")


# --- sub-tasks ---------------------------------------------------------------

def _exchange(
    backend: PlannerBackend,
    phase: PlannerPhase,
    subtask: str,
    fields: dict[str, str],
    images: dict[str, np.ndarray],
    parser: Callable[[str], object],
    nudge: str,
    transcript: PlannerTranscript | None,
    annotate: Annotator | None,
):
    """Render, query, parse; one retry with a nudge. Every query is recorded once."""
    last_error: DexGraspError | None = None
    for suffix in ("", nudge):
        text = render_text(subtask, fields, suffix)
        request = SubtaskRequest(subtask, text, render_parts(text, images), fields, images)
        started = time.perf_counter()
        raw = backend.complete(request)
        record = TranscriptRecord(phase=phase, subtask=subtask, prompt_text=text, raw_response=raw,
                                  wall_time=time.perf_counter() - started)
        try:
            parsed = parser(raw)
        except NoCandidate as e:
            record.error = e.code
            _append(transcript, record, annotate)
            raise
        except (UnparseableResponse, InvalidBBox) as e:
            record.error = e.code
            _append(transcript, record, annotate)
            last_error = e
            if isinstance(e, InvalidBBox):
                raise
            continue
        record.parsed = parsed.model_dump() if isinstance(parsed, BaseModel) else _jsonable(parsed)
        _append(transcript, record, annotate)
        return parsed
    raise last_error


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, BBox):
        return value.as_list()
    return value


def _append(transcript: PlannerTranscript | None, record: TranscriptRecord, annotate: Annotator | None) -> None:
    if annotate is not None:
        record.ground_truth = annotate(record)
    if transcript is not None:
        transcript.append(record)


def propose_instruction(prompt: str, initial_head: np.ndarray, current_head: np.ndarray, backend: PlannerBackend,
                        transcript: PlannerTranscript | None = None, annotate: Annotator | None = None) -> str:
    if not prompt.strip():
        raise ValueError("Empty user prompt")
    return _exchange(
        backend, P.PROPOSE_INSTRUCTION, "propose_instruction",
        {"user_prompt": prompt},
        {"initial_head_image": initial_head, "current_head_image": current_head},
        parse_instruction, INSTRUCTION_NUDGE, transcript, annotate,
    )


def predict_bbox(instruction: str, head_image: np.ndarray, backend: PlannerBackend,
                 transcript: PlannerTranscript | None = None, annotate: Annotator | None = None) -> tuple[BBox, str]:
    if not instruction.strip():
        raise ValueError("Empty grasping instruction")
    h, w = np.asarray(head_image).shape[:2]
    bbox, label = _exchange(
        backend, P.PREDICT_BBOX, "predict_bbox",
        {"grasping_instruction": instruction},
        {"current_head_image": head_image},
        lambda raw: parse_bbox(raw, w, h), JSON_NUDGE, transcript, annotate,
    )
    return bbox, label


def _verdict(raw: str) -> tuple[bool, str]:
    return parse_bool(raw), reasoning_of(raw)


def verify_grasp(head_image: np.ndarray, wrist_image: np.ndarray, instruction: str, backend: PlannerBackend,
                 transcript: PlannerTranscript | None = None, annotate: Annotator | None = None) -> tuple[bool, str]:
    return _exchange(
        backend, P.VERIFY_GRASP, "verify_grasp",
        {"grasping_instruction": instruction},
        {"current_head_image": head_image, "current_wrist_image": wrist_image},
        _verdict, BOOL_NUDGE, transcript, annotate,
    )


def check_completion(prompt: str, initial_head: np.ndarray, current_head: np.ndarray, backend: PlannerBackend,
                     transcript: PlannerTranscript | None = None, annotate: Annotator | None = None) -> tuple[bool, str]:
    return _exchange(
        backend, P.CHECK_COMPLETION, "check_completion",
        {"user_prompt": prompt},
        {"initial_head_image": initial_head, "current_head_image": current_head},
        _verdict, BOOL_NUDGE, transcript, annotate,
    )


SUBTASK_PARSERS: dict[str, Callable[[str], object]] = {
    "propose_instruction": parse_instruction,
    "predict_bbox": parse_bbox,
    "verify_grasp": _verdict,
    "check_completion": _verdict,
}


def replay_transcript(transcript: PlannerTranscript) -> list:
    """Re-parse every recorded response; returns the parsed decisions in order."""
    decisions = []
    for record in transcript.records:
        if record.subtask is None or record.error is not None:
            continue
        decisions.append(_jsonable(SUBTASK_PARSERS[record.subtask](record.raw_response)))
    return decisions


# --- state machine -----------------------------------------------------------

class PlannerStateMachine:
    """Tracks the current phase and rejects edges not in TRANSITIONS."""

    def __init__(self, transcript: PlannerTranscript):
        self.phase = P.CHECK_COMPLETION
        self.transcript = transcript

    def advance(self, dst: PlannerPhase) -> PlannerPhase:
        check_transition(self.phase, dst)
        logger.debug("%s → %s", self.phase.value, dst.value)
        self.phase = dst
        return dst

    def mark(self, **extra) -> None:
        """Record a non-query phase (Executing, Place, Reset, Done, Failed)."""
        self.transcript.append(TranscriptRecord(phase=self.phase, **extra))

    @property
    def finished(self) -> bool:
        return self.phase in (P.DONE, P.FAILED)


def run_prompt(
    prompt: str,
    sim: TabletopSim,
    controller: GraspController,
    backend: PlannerBackend,
    limits: RunLimits | None = None,
    annotate: Annotator | None = None,
) -> tuple[PlannerTranscript, RunOutcome]:
    """Drive the planner loop until the prompt is complete or limits run out."""
    limits = limits or RunLimits()
    transcript = PlannerTranscript(user_prompt=prompt)
    machine = PlannerStateMachine(transcript)
    workspace = sim.config.workspace_pixels()

    def head() -> np.ndarray:
        return crop_workspace(sim.observe().head_rgb, workspace)

    initial = head()
    instructions = 0
    task: GraspTask | None = None
    grasped = False

    while not machine.finished:
        phase = machine.phase
        try:
            if phase == P.CHECK_COMPLETION:
                done, _ = check_completion(prompt, initial, head(), backend, transcript, annotate)
                if done:
                    machine.advance(P.DONE)
                elif instructions >= limits.max_instructions:
                    machine.advance(P.FAILED)
                else:
                    machine.advance(P.PROPOSE_INSTRUCTION)

            elif phase == P.PROPOSE_INSTRUCTION:
                try:
                    instruction = propose_instruction(prompt, initial, head(), backend, transcript, annotate)
                except NoCandidate:
                    machine.advance(P.DONE)
                    continue
                instructions += 1
                task = GraspTask(user_prompt=prompt, instruction=instruction,
                                 max_attempts=limits.max_attempts_per_instruction, initial_head_image=initial)
                machine.advance(P.PREDICT_BBOX)

            elif phase == P.PREDICT_BBOX:
                task.bbox, _ = predict_bbox(task.instruction, head(), backend, transcript, annotate)
                machine.advance(P.EXECUTING)

            elif phase == P.EXECUTING:
                result = controller.execute(sim, task.bbox)
                machine.mark(parsed={"outcome": result.outcome, "steps": result.steps, "lifted": result.lifted},
                             subtask=None)
                machine.advance(P.VERIFY_GRASP)

            elif phase == P.VERIFY_GRASP:
                obs = sim.observe()
                grasped, _ = verify_grasp(obs.head_rgb, obs.wrist_rgb, task.instruction, backend,
                                          transcript, annotate)
                if grasped:
                    machine.advance(P.PLACE)
                else:
                    task.attempt_count += 1
                    machine.advance(P.RESET)

            elif phase == P.PLACE:
                sim.place_held()
                machine.mark()
                machine.advance(P.RESET)

            elif phase == P.RESET:
                sim.reset_robot()
                machine.mark()
                if not grasped and not task.exhausted:
                    machine.advance(P.PREDICT_BBOX)
                else:
                    machine.advance(P.CHECK_COMPLETION)

        except DexGraspError as e:
            logger.warning("%s failed: %s", phase.value, e)
            if P.FAILED in TRANSITIONS[phase]:
                machine.advance(P.FAILED)
            elif phase == P.VERIFY_GRASP:
                grasped = False
                task.attempt_count += 1
                machine.advance(P.RESET)
            else:
                raise

    machine.mark()
    outcome = RunOutcome.DONE if machine.phase == P.DONE else RunOutcome.FAILED
    logger.info("prompt %r finished: %s after %d instructions", prompt, outcome.value, instructions)
    return transcript, outcome
