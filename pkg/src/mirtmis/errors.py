"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`MirtError`,
so callers (the CLI in particular) can map failures to exit codes without
catching unrelated exceptions.
"""


class MirtError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MirtError, ValueError):
    """Inputs violate a documented precondition (shape, range, type)."""


class NumericalError(MirtError, ArithmeticError):
    """A computation produced or would produce a non-finite or underflowed value."""


class DegenerateItemError(NumericalError):
    """An item has only correct or only incorrect responses; its MLE is unbounded."""

    def __init__(self, item, kind):
        self.item = item
        self.kind = kind
        super().__init__(f"item {item} has {kind} responses; its intercept has no finite MLE")


class BracketingError(NumericalError):
    """A one-dimensional root search could not find a sign change."""


class IllConditionedError(NumericalError):
    """Observed information is not positive for some parameter."""


class ExperimentError(MirtError):
    """A simulation experiment could not produce a valid result."""


class ConfigError(MirtError):
    """A run configuration is missing fields or contains invalid values."""


class StageError(MirtError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
