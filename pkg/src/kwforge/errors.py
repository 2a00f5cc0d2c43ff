"""Exception types shared across the package."""


class KwforgeError(Exception):
    """Base class for all package-specific errors."""


class DataError(KwforgeError):
    """Corpus / record file is malformed or inconsistent."""


class ModelError(KwforgeError):
    """A model handle could not be constructed or failed at runtime."""


class TargetError(KwforgeError):
    """The requested attack target cannot be resolved to a vocabulary token."""


class TrainingError(KwforgeError):
    """Mapper training diverged or was misconfigured."""


class MetricError(KwforgeError):
    """A metric is undefined for the given inputs (e.g. zero clean BLEU)."""
