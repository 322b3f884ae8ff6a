"""Exception hierarchy shared across the package."""


class QExploreError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class InvalidGraphError(QExploreError):
    pass


class ArchiveError(QExploreError):
    pass


class UnsupportedVersionError(ArchiveError):
    pass


class ArchiveParseError(ArchiveError):
    pass


class NumericDomainError(QExploreError, ValueError):
    pass


class OracleError(QExploreError):
    pass


class OracleParseError(OracleError):
    """Raised when a response cannot be parsed after all retries."""


class CassetteMissError(OracleError):
    """A replay cassette has no recording for the request."""


class EnvironmentProtocolError(QExploreError):
    pass


class ManifestError(QExploreError):
    pass


class DatasetError(QExploreError):
    pass
