"""Exception hierarchy. The CLI maps FormatError to exit 1 and ValidationError to exit 2."""


class PDKError(Exception):
    pass


class FormatError(PDKError):
    """Unreadable or malformed file (raster, JSON sidecar)."""


class ValidationError(PDKError):
    """Input is well-formed but violates a contract (dimensions, ids, classes)."""


class DecodeError(ValidationError):
    """A raster references segment ids the sidecar does not define."""


class EvaluationError(ValidationError):
    pass


class GenerationError(ValidationError):
    pass
