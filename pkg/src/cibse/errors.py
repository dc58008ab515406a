"""Exception hierarchy. Every error raised by this package derives from CibseError."""


class CibseError(Exception):
    """Base class for all package errors."""


class ShapeError(CibseError, ValueError):
    """Tensor or parameter shapes are inconsistent; message names the offending dimension."""


class DataError(CibseError, ValueError):
    """Malformed external data: images, label files, dataset layout."""


class CheckpointError(CibseError, ValueError):
    """Base class for checkpoint file problems."""


class BadMagicError(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class VersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class TruncatedError(CheckpointError):
    """File ended mid-entry, or has trailing bytes beyond the declared entries."""


class DuplicateNameError(CheckpointError):
    """The same tensor name appears more than once in a checkpoint."""


class BindingError(CibseError, ValueError):
    """A checkpoint does not satisfy a model graph: missing, extra, or mis-shaped tensors."""
