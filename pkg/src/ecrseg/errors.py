"""Exception hierarchy shared by every stage."""


class EcrsegError(Exception):
    """Base class; ``stage`` is filled in by the pipeline when re-raised."""

    stage: str | None = None


class MalformedHeader(EcrsegError, ValueError):
    pass


class UnsupportedEncoding(EcrsegError, ValueError):
    pass


class DimensionMismatch(EcrsegError, ValueError):
    pass


class IoFailure(EcrsegError, OSError):
    pass


class EmptyMask(EcrsegError, ValueError):
    pass


class RegionOutOfBounds(EcrsegError, IndexError):
    pass


class GeometryMismatch(EcrsegError, ValueError):
    pass


class DegenerateRange(EcrsegError, ValueError):
    pass


class CenterOutsideMask(EcrsegError, ValueError):
    pass


class TooFewSamples(EcrsegError, ValueError):
    pass


class SingleClass(EcrsegError, ValueError):
    pass


class NonFiniteFeature(EcrsegError, ValueError):
    pass


class MissingFeatureMap(EcrsegError, KeyError):
    pass


class InsufficientPatients(EcrsegError, ValueError):
    pass


class SpecInvalid(EcrsegError, ValueError):
    pass
