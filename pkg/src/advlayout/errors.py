"""Exception hierarchy shared by every module."""

from __future__ import annotations

from typing import Any


class AdvLayoutError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(AdvLayoutError, ValueError):
    pass


class LayoutInfeasibleError(AdvLayoutError):
    """Raised when the resample budget runs out before a layout is complete."""

    def __init__(self, circle_index: int, attempts: int = 0):
        self.circle_index = circle_index
        self.attempts = attempts
        super().__init__(
            f"layout infeasible: could not place circle {circle_index} "
            f"after {attempts} attempts"
        )


class MissingStickerError(AdvLayoutError, LookupError):
    def __init__(self, sticker_id: Any):
        self.sticker_id = sticker_id
        super().__init__(f"unknown sticker id: {sticker_id!r}")


class EmptyPoolError(AdvLayoutError):
    pass


class DuplicateStickerError(AdvLayoutError):
    pass


class StickerDecodeError(AdvLayoutError):
    def __init__(self, path: Any, reason: str = ""):
        self.path = path
        super().__init__(f"cannot decode sticker image {path}: {reason}".rstrip(": "))


class OracleError(AdvLayoutError):
    """Base for failures on the black-box side."""


class OracleIOError(OracleError):
    """The oracle process died or replied with something unusable."""

    def __init__(self, message: str, raw: Any = None):
        self.raw = raw
        super().__init__(message if raw is None else f"{message} (raw={raw!r})")


class ProtocolError(OracleIOError):
    """A wire message could not be decoded."""


class OracleStartupError(OracleError):
    pass


class OracleIncompatibleError(OracleError):
    def __init__(self, expected: int, got: Any):
        self.expected = expected
        self.got = got
        super().__init__(f"oracle protocol version {got!r}, expected {expected}")


class EvaluationError(OracleError):
    """Fitness evaluation failed; carries the affected view id."""

    def __init__(self, message: str, view_id: Any = None):
        self.view_id = view_id
        super().__init__(f"{message} (view {view_id})" if view_id is not None else message)


class OptimizationAborted(AdvLayoutError):
    """The search stopped on an oracle failure; best_so_far holds the partial result."""

    def __init__(self, message: str, best_so_far: Any = None):
        self.best_so_far = best_so_far
        super().__init__(message)


class CorruptCheckpointError(AdvLayoutError):
    pass
