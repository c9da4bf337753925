"""Exception types shared across the package."""


class XprobeError(Exception):
    """Base class for all package errors."""


class GridError(XprobeError):
    """Invalid grid geometry (zero-sized image, too many patches, ...)."""


class DimensionError(XprobeError):
    """Mismatched image/baseline/grid dimensions."""


class OracleError(XprobeError):
    """A model adapter failed to produce confidences."""


class DegenerateCalibrationError(XprobeError):
    """Calibration with top-1 average not above the baselined average."""


class AttributionFormatError(XprobeError):
    """Malformed or out-of-range attribution map file."""


class ConfigError(XprobeError):
    """Invalid run configuration."""
