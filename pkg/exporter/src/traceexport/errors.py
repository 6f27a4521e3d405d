"""Exporter error types."""


class ExportError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExportError):
    """Encoder could not be constructed or loaded."""


class PreprocessMismatch(ExportError):
    """The encoder's patch geometry disagrees with the planned tiling."""
