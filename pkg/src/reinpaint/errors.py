"""Exception hierarchy.

Three broad families map onto the CLI exit codes: configuration problems
(exit 2), backend problems (exit 3), and file I/O problems (exit 4).
"""


class ReinpaintError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ReinpaintError):
    """Invalid parameters, config files, or run preconditions. Exit code 2."""


class BadParams(ConfigError):
    pass


class BadArgs(ConfigError):
    pass


class EmptyCorpus(ConfigError):
    pass


class MissingOriginal(ConfigError):
    """An objective needs the original image and none is available."""


class RatioUnreachable(ConfigError):
    """Rejection sampling exhausted max_attempts without hitting the band."""


class NoRecords(ConfigError):
    pass


class IncompleteGrid(ConfigError):
    """Selection frequency needs a score for every (image, method) pair."""


class NoFiniteValues(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class TooSmall(ConfigError):
    """Input smaller than the metric's window."""


class BackendError(ReinpaintError):
    """Inpainting or model backend failures. Exit code 3."""


class BackendFailure(BackendError):
    pass


class ProtocolViolation(BackendError):
    """Backend replied, but the reply does not follow the wire contract."""


class BackendTimeout(BackendError):
    pass


class AllBackendsFailed(BackendError):
    """Every record in a run failed; nothing was scored."""


class ModelLoadError(BackendError):
    """External perceptual model file could not be loaded."""


class IoFailure(ReinpaintError):
    """Unreadable or unwritable files. Exit code 4."""


class UnsupportedFormat(IoFailure):
    """File exists but is not a raster this toolkit accepts."""
