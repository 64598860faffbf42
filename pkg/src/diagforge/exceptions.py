"""Error taxonomy shared across the package.

Every raised condition maps to one of these so callers (CLI, service)
can turn failures into one-line machine-parseable messages.
"""


class DiagforgeError(Exception):
    """Base class for all package errors."""


class DimensionError(DiagforgeError):
    """Raster dimensions invalid or mismatched."""


class ValidationError(DiagforgeError):
    """A domain-type invariant was violated."""


class ManifestError(DiagforgeError):
    """Manifest missing, malformed, or referencing absent files."""


class ConfigurationError(DiagforgeError):
    """Invalid or incomplete run/backend configuration."""


class TrainingError(DiagforgeError):
    """Training diverged or could not proceed."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SamplingError(DiagforgeError):
    """Reverse sampling produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GenerationError(DiagforgeError):
    """A generation backend failed after retries."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class BackendError(DiagforgeError):
    """Single backend invocation failed (retryable)."""


class MetricError(DiagforgeError):
    """Metric preconditions violated (sample counts, labels, symmetry)."""


class CheckpointError(DiagforgeError):
    """Checkpoint file missing, unversioned, or incompatible."""
