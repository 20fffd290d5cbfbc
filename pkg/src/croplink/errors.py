"""Exception hierarchy shared by all croplink modules."""


class CropLinkError(Exception):
    """Base class for all croplink errors."""


class GeometryError(CropLinkError, ValueError):
    """Link geometry is undefined or violates its invariants."""


class DomainError(CropLinkError, ValueError):
    """Argument lies outside the domain of a model function."""


class EmptyDatasetError(CropLinkError, ValueError):
    pass


class DegenerateDatasetError(CropLinkError, ValueError):
    """Dataset cannot identify the model parameters."""


class InfeasibleDayError(CropLinkError, ValueError):
    """A work area cannot be covered from any allowed gateway position."""


class CurveError(CropLinkError, ValueError):
    """Link-quality curve or stream table is empty or malformed."""


class UnknownResolutionError(CropLinkError, KeyError):
    pass


class MalformedLogError(CropLinkError, ValueError):
    """Flight log is empty or its header does not match the expected columns."""


class InsufficientSamplesError(CropLinkError, ValueError):
    pass
