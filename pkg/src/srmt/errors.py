"""Exception types raised by the engine.

Error class names are part of the CLI contract: load and validation
failures surface the class name in the error message so scripts can grep
for them.
"""


class SrmtError(Exception):
    """Base class for all engine errors."""


class ShapeMismatch(SrmtError):
    """Tensor shapes are inconsistent with the requested operation."""


class InvalidClass(SrmtError):
    """Class index outside [0, num_classes)."""


class ModelLoadError(SrmtError):
    """Base class for weight-file loading failures."""


class BadMagic(ModelLoadError):
    """File does not start with the SRMTW magic bytes."""


class UnsupportedVersion(ModelLoadError):
    """SRMTW container version is not supported by this engine."""


class MalformedDescriptor(ModelLoadError):
    """Architecture descriptor is not valid JSON or is internally inconsistent."""


class UnsupportedLayerKind(ModelLoadError):
    """Descriptor names a layer kind outside the supported repertoire."""


class ShapeChainBroken(ModelLoadError):
    """Layer shapes do not chain from the input to the class scores."""


class TruncatedBlob(ModelLoadError):
    """Weight blob ends before a layer's declared parameters."""


class ModelHasNoTargetLayer(ModelLoadError):
    """No convolutional layer available as the heat-map target."""


class DecodeError(SrmtError):
    """A seed image file could not be decoded or does not fit the model."""


class EmptySeedSet(SrmtError):
    """No usable seed images survived loading and filtering."""


class EmptyHeatmapList(SrmtError):
    """A fusion rule was given zero heat maps."""


class RectLargerThanImage(SrmtError):
    """Requested rectangle size exceeds the image dimensions."""


class RectOutOfBounds(SrmtError):
    """Rectangle does not lie entirely within the image."""


class UndefinedForZeroTrials(SrmtError):
    """Failure-detection rate requested for an empty trial set."""


class FewerThanTwoBins(SrmtError):
    """Correlation requested with fewer than two qualifying gradient bins."""


class ConfigError(SrmtError):
    """Campaign configuration file is missing, malformed, or inconsistent."""
