"""Exception types shared across the package."""


class RestainLabError(Exception):
    """Base class for all restainlab errors."""


class InvalidConfigError(RestainLabError):
    """A configuration value violates its invariants."""


class SingularMatrixError(RestainLabError):
    """The stain system is not invertible (condition number too large)."""


class DegenerateDataError(RestainLabError):
    """Too few foreground pixels to estimate stain directions."""


class CollapsedAtomError(RestainLabError):
    """A stain vector lost its entire support during estimation."""

    def __init__(self, label: str):
        super().__init__(f"stain vector {label!r} has empty support")
        self.label = label
