"""Exception types raised across the package."""


class FinemanipError(Exception):
    pass


# scene-sim
class PlacementError(FinemanipError):
    pass


class EmptySceneError(FinemanipError):
    pass


class OutOfWorkspaceError(FinemanipError):
    pass


class DemoFailureError(FinemanipError):
    pass


class TaskSpecError(FinemanipError, ValueError):
    pass


# episode-data
class TooShortError(FinemanipError, ValueError):
    pass


class VocabularyError(FinemanipError, KeyError):
    def __str__(self):  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class EpisodeLoadError(FinemanipError):
    pass


class CorruptHeaderError(EpisodeLoadError):
    pass


class TruncatedDataError(EpisodeLoadError):
    pass


class ChecksumMismatchError(EpisodeLoadError):
    pass


class InsufficientDataError(FinemanipError, ValueError):
    pass


# encoders / policy
class ShapeError(FinemanipError, ValueError):
    pass


class InvalidInputError(FinemanipError, ValueError):
    pass


class InvalidStateError(FinemanipError, ValueError):
    pass


class EmptyTextError(FinemanipError, ValueError):
    pass


class NoInstructionError(FinemanipError, ValueError):
    pass


class InvalidQuaternionError(FinemanipError, ValueError):
    pass


# prompt-align
class EmptyBatchError(FinemanipError, ValueError):
    pass


class MissingKeyError(FinemanipError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SplitLeakageError(FinemanipError, ValueError):
    pass


# training / evaluation
class NonFiniteLossError(FinemanipError, FloatingPointError):
    def __init__(self, term: str, detail: str = ""):
        self.term = term
        super().__init__(f"non-finite loss in term '{term}'" + (f": {detail}" if detail else ""))


class IncompatibleAblationError(FinemanipError, ValueError):
    pass


class CheckpointError(FinemanipError):
    pass
