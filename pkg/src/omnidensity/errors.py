"""Exception types raised across the package."""


class OmniDensityError(Exception):
    """Base class for all package errors."""


class ZeroVector(OmniDensityError, ValueError):
    pass


class AtProjectionCenter(OmniDensityError, ValueError):
    """Point coincides with the north pole, the center of stereographic projection."""


class PointAtProjectionCenter(AtProjectionCenter):
    pass


class NearProjectionCenter(AtProjectionCenter):
    pass


class NearSingularity(AtProjectionCenter):
    pass


class InvalidRotation(OmniDensityError, ValueError):
    pass


class DimensionMismatch(OmniDensityError, ValueError):
    pass


class TooFewPoints(OmniDensityError, ValueError):
    pass


class NegativeCount(OmniDensityError, ValueError):
    pass


class NonSquareImage(OmniDensityError, ValueError):
    pass


class OddDimensions(OmniDensityError, ValueError):
    pass


class DegenerateHull(OmniDensityError, ValueError):
    pass


class SchemaVersionMismatch(OmniDensityError, ValueError):
    pass


class MalformedRecord(OmniDensityError, ValueError):
    def __init__(self, record_id, message):
        self.record_id = record_id
        super().__init__(f"record {record_id!r}: {message}")


class UnknownGroup(OmniDensityError, KeyError):
    pass


class MissingGroupKey(OmniDensityError, KeyError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"records missing group key: {', '.join(map(str, self.ids))}")


class DiskBehindCamera(OmniDensityError, ValueError):
    pass


class LengthMismatch(OmniDensityError, ValueError):
    pass


class EmptyInput(OmniDensityError, ValueError):
    pass


class MissingMap(OmniDensityError, FileNotFoundError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"missing density maps for: {', '.join(map(str, self.ids))}")
