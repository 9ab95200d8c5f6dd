"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all trafficmon errors."""


class GeometryError(EngineError, ValueError):
    """Degenerate or non-finite geometry (zero-area box, bad polygon)."""


class InvalidInputError(EngineError, ValueError):
    """Operation input violates a precondition (zero vector, missing embedding, ...)."""


class ValidationError(EngineError, ValueError):
    """A record failed schema or domain validation."""


class DuplicateCameraError(ValidationError):
    """Two registry entries share a camera_id."""


class ParseError(EngineError, ValueError):
    """Malformed input line; carries the 1-based line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MaskDecodeError(EngineError, ValueError):
    """Mask record cannot be decoded (out-of-bounds run, degenerate polygon)."""


class SequencingError(EngineError, RuntimeError):
    """Stream records arrived out of order."""


class InsufficientDataError(EngineError, ValueError):
    """Not enough samples/history to compute the requested quantity."""


class MetricUndefinedError(EngineError, ValueError):
    """A metric's denominator is zero; message names the metric."""


class UnknownCameraError(EngineError, LookupError):
    """Camera id not present in the registry."""
