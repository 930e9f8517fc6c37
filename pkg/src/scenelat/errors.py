"""Exception taxonomy, shared across all modules.

Every error raised on a validated code path is a subclass of SceneLatError so
callers (and the CLI) can catch one base type per stage and re-raise with a
stage tag.
"""


class SceneLatError(Exception):
    """Base class for all scenelat errors."""


# --- structured latent construction / serialization ---

class DuplicatePositionError(SceneLatError):
    pass


class OutOfBoundsError(SceneLatError):
    pass


class InvariantViolationError(SceneLatError):
    pass


class BadMagicError(SceneLatError):
    pass


class VersionMismatchError(SceneLatError):
    pass


class TruncatedFileError(SceneLatError):
    pass


class WindowOutOfGridError(SceneLatError):
    pass


# --- flow engine ---

class TimeOutOfRangeError(SceneLatError):
    pass


class FieldError(SceneLatError):
    """A flow-field provider failed while evaluating."""


class ShapeMismatchError(SceneLatError):
    pass


class DivisionNearZeroError(SceneLatError):
    pass


# --- spatial prior ---

class NoValidPixelsError(SceneLatError):
    pass


class DegenerateExtentError(SceneLatError):
    pass


# --- landmark alignment ---

class EmptyCloudError(SceneLatError):
    pass


class DegenerateGeometryError(SceneLatError):
    pass


class UnknownLandmarkError(SceneLatError):
    pass


# --- region tiling / running / fusion ---

class EmptySceneError(SceneLatError):
    pass


class PatchLargerThanGridError(SceneLatError):
    pass


class RowAlignmentError(SceneLatError):
    pass


class OriginOutOfGridError(SceneLatError):
    pass


class IncompleteSceneError(SceneLatError):
    def __init__(self, message, voxels=None):
        super().__init__(message)
        self.voxels = voxels if voxels is not None else []


# --- generator endpoint protocol ---

class AdapterTimeoutError(SceneLatError):
    pass


class ProtocolError(SceneLatError):
    pass


class RemoteError(SceneLatError):
    """Error reported by the remote generator; carries the remote message."""

    def __init__(self, message, remote_type=""):
        super().__init__(message)
        self.remote_type = remote_type


class ConfigError(SceneLatError):
    pass


class StageError(SceneLatError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
