"""
Exception hierarchy for dexgrasp.

Every failure a caller may want to branch on has its own class and a stable
``code`` string, so CLI reports and transcripts can name errors without
matching on message text.
"""


class DexGraspError(Exception):
    """Base class for all dexgrasp errors."""

    code = "DexGraspError"


# --- storage -----------------------------------------------------------------

class TensorFileError(DexGraspError):
    code = "TensorFileError"


class BadMagic(TensorFileError):
    code = "BadMagic"


class Truncated(TensorFileError):
    code = "Truncated"


class UnknownDtype(TensorFileError):
    code = "UnknownDtype"


class ShapeMismatch(DexGraspError):
    """Data does not match a declared or expected shape."""

    code = "ShapeMismatch"


class MissingStream(DexGraspError):
    code = "MissingStream"

    def __init__(self, stream: str):
        super().__init__(f"MissingStream({stream!r})")
        self.stream = stream


class StreamShapeMismatch(DexGraspError):
    code = "StreamShapeMismatch"


class EmptyDataset(DexGraspError):
    code = "EmptyDataset"


class DimensionMismatch(DexGraspError):
    code = "DimensionMismatch"


class DatasetExists(DexGraspError):
    code = "DatasetExists"


# --- simulator ---------------------------------------------------------------

class TooManyObjects(DexGraspError):
    code = "TooManyObjects"


class UnplaceableScene(DexGraspError):
    code = "UnplaceableScene"


class UnknownObject(DexGraspError):
    code = "UnknownObject"


class OccludedTarget(DexGraspError):
    code = "OccludedTarget"


class UnreachableTarget(DexGraspError):
    code = "UnreachableTarget"


class ExpertFailure(DexGraspError):
    """Scripted expert success rate fell below the collection floor."""

    code = "ExpertFailure"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# --- perception --------------------------------------------------------------

class WrongResolution(DexGraspError):
    code = "WrongResolution"


class NoObjectInBox(DexGraspError):
    code = "NoObjectInBox"


class TrackLost(DexGraspError):
    code = "TrackLost"


class RemoteServiceError(DexGraspError):
    """An HTTP adapter (perception or planner endpoint) failed."""

    code = "RemoteServiceError"


# --- planner -----------------------------------------------------------------

class NoCandidate(DexGraspError):
    code = "NoCandidate"


class UnparseableResponse(DexGraspError):
    code = "UnparseableResponse"


class InvalidBBox(DexGraspError):
    code = "InvalidBBox"


class IllegalTransition(DexGraspError):
    code = "IllegalTransition"


# --- controller / training ---------------------------------------------------

class DiffusionStepOutOfRange(DexGraspError):
    code = "DiffusionStepOutOfRange"


class CheckpointMismatch(DexGraspError):
    code = "CheckpointMismatch"


class NonFiniteLoss(DexGraspError):
    code = "NonFiniteLoss"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FrozenEncoderModified(DexGraspError):
    code = "FrozenEncoderModified"


# --- analysis ----------------------------------------------------------------

class RecordingAbsent(DexGraspError):
    code = "RecordingAbsent"
