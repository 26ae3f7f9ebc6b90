"""Exception hierarchy shared across the package."""


class OutfitGraphError(Exception):
    """Base class for all package errors."""


class ParseError(OutfitGraphError):
    """Malformed input text; carries the character offset when known."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (offset {offset})")
        self.offset = offset


class StructureError(OutfitGraphError):
    """Structurally invalid data (duplicate ids, shape mismatch, bad cache)."""


class DatasetError(OutfitGraphError):
    """Dataset-level failure, e.g. filtering removed every outfit."""


class SamplingError(OutfitGraphError):
    """Random sampling cannot satisfy its constraints."""


class FeatureLookupError(OutfitGraphError):
    """A requested item is missing from a feature store."""

    def __init__(self, item_id, modality):
        super().__init__(f"no {modality} features for item {item_id!r}")
        self.item_id = item_id
        self.modality = modality


class FormatError(OutfitGraphError):
    """On-disk binary or report format violation."""


class ModelError(OutfitGraphError):
    """Model cannot score the given input (missing category params etc.)."""


class NumericError(OutfitGraphError):
    """Non-finite value encountered during compute."""
