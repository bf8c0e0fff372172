class VidInspectError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(VidInspectError, ValueError):
    pass


class NumericError(VidInspectError, ValueError):
    pass


class InsufficientSupportError(ConfigurationError):
    """Spatial extent too small for a 3x3 kernel."""


class MissingScoreError(VidInspectError, KeyError):
    pass


class SequencingError(VidInspectError, ValueError):
    pass


class ProtocolError(VidInspectError, ValueError):
    """The VLM returned something that is not the agreed JSON object."""


class VLMError(VidInspectError, RuntimeError):
    """Transport-level failure talking to the VLM."""
