"""Exception hierarchy shared by the codecs, the corpus generator and the CLI."""


class ZernshapeError(Exception):
    """Base class; ``code`` is the CLI exit status for this failure kind."""

    code = 1


class DomainError(ZernshapeError, ValueError):
    """A parameter lies outside its valid range."""

    code = 2


class ShapeMismatchError(ZernshapeError, ValueError):
    """Arrays, grids or index sets that must agree do not."""

    code = 3


class FrameError(ZernshapeError, ValueError):
    """A mask is in the wrong coordinate frame for the operation."""

    code = 4


class DegenerateShapeError(ZernshapeError):
    """An operation produced (or received) an empty mask."""

    code = 5


class StateError(ZernshapeError):
    """An encoding is in the wrong propagation state for the operation."""

    code = 6


class IrreversibleError(ZernshapeError):
    """The requested inversion is mathematically impossible."""

    code = 7


class RecoveryError(ZernshapeError):
    """Pose or phase recovery failed (rank deficiency, phase wrap)."""

    code = 8


class ConstructionError(ZernshapeError):
    """Radial window construction did not converge."""

    code = 9


class GenerationError(ZernshapeError):
    """Corpus generation exhausted its retry budget."""

    code = 10


class FormatError(ZernshapeError, ValueError):
    """A file on disk is malformed or has an unsupported version."""

    code = 11


class PathError(ZernshapeError, OSError):
    """An input path is missing or an output path cannot be written."""

    code = 12
