"""Exception hierarchy shared across the package."""


class NerdError(Exception):
    """Base class for all package errors."""


class DimensionError(NerdError):
    """Shapes or sizes do not satisfy an operation's contract."""


class FormatError(NerdError):
    """A file (PNG, checkpoint, manifest) violates its expected format."""


class ConfigurationError(NerdError):
    """Invalid or inconsistent configuration of a model or command."""


class TrainingError(NerdError):
    """Optimization failed (non-finite loss or gradients)."""


class AutodiffError(NerdError):
    """Misuse of the tape machinery (e.g. repeated backward)."""
