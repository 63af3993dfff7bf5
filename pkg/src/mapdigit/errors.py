"""Exception hierarchy shared across the package."""


class MapDigitError(Exception):
    """Base class for every error raised by mapdigit."""


class GeometryError(MapDigitError):
    pass


class InsufficientPairsError(GeometryError):
    """Fewer correspondences than a homography needs (four)."""


class DegenerateConfigurationError(GeometryError):
    """Collinear or coincident points make the linear system singular."""


class DegenerateProjectionError(GeometryError):
    """Projective divide by a w-component too close to zero."""


class NoConsensusError(GeometryError):
    """RANSAC could not find four or more mutually consistent matches."""


class RasterError(MapDigitError):
    pass


class UnreadableFileError(RasterError):
    pass


class UnsupportedFormatError(RasterError):
    pass


class SchemaError(MapDigitError):
    """A serialized document is missing members or has the wrong version."""


class ValidationError(MapDigitError):
    """A value violates a documented invariant."""


class MalformedDocumentError(MapDigitError):
    """A model response could not be parsed as structured text."""


class ClientError(MapDigitError):
    """A model, matcher or detector client failed."""


class EmptyTitleError(ClientError):
    pass


class DegenerateBBoxError(ValidationError):
    pass


class MissingCornerError(ValidationError):
    pass


class UnparseableTextError(ValidationError):
    """A coordinate label could not be read as degrees."""


class GatingRejectedError(MapDigitError):
    """Every georeferencing path was rejected by its acceptance gates."""
