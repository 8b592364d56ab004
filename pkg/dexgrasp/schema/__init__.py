"""
Pydantic schemas shared across dexgrasp.
"""

from .eval import BenchmarkSuite, LongHorizonResult, SuiteEntry, TrialResult
from .manifest import DatasetManifest
from .observation import Action, ActionChunk, BBox, Episode, Observation
from .planner import GraspTask, PlannerPhase, PlannerTranscript, TranscriptRecord
from .scene import Background, BackgroundSpec, Lighting, LightingSpec, ObjectSpec, SceneSpec, Shape

__all__ = [
    "Action",
    "ActionChunk",
    "Background",
    "BackgroundSpec",
    "BBox",
    "BenchmarkSuite",
    "DatasetManifest",
    "Episode",
    "GraspTask",
    "Lighting",
    "LightingSpec",
    "LongHorizonResult",
    "Observation",
    "ObjectSpec",
    "PlannerPhase",
    "PlannerTranscript",
    "SceneSpec",
    "Shape",
    "SuiteEntry",
    "TranscriptRecord",
    "TrialResult",
]
