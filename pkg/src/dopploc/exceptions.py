"""Exception hierarchy for dopploc."""


class DopplocError(Exception):
    """Base class for all dopploc errors."""


class SingularMatrixError(DopplocError):
    """Linear system matrix is singular to working precision."""


class DimensionMismatchError(DopplocError):
    """Vector or matrix dimensions are inconsistent with the system."""


class CoincidentPointsError(DopplocError):
    """Transmitter and receiver positions coincide; range rate undefined."""


class ZeroFrequencyError(DopplocError):
    """Transmit frequency is zero; Doppler relation undefined."""


class InvalidScaleError(DopplocError):
    """Scale frame has a non-positive unit."""


class BadStartSolutionError(DopplocError):
    """Start point does not satisfy the system at the start parameters."""


class DegenerateDrawError(DopplocError):
    """Random seeding produced a degenerate configuration too many times."""


class NoProgressError(DopplocError):
    """Monodromy stopped adding solutions before reaching the expected count."""


class NotSymmetricError(DopplocError):
    """Solution set is not closed under the velocity-negation involution."""


class FormatError(DopplocError):
    """A structured text file violates its format contract."""


class CorruptPackError(DopplocError):
    """Start-pack file failed parsing or checksum verification."""


class FamilyMismatchError(DopplocError):
    """Start pack belongs to a different system family than requested."""


class NoCandidatesError(DopplocError):
    """Filtering removed every endpoint; no physical candidate remains."""


class PackMissingError(DopplocError):
    """No start pack is available for the requested family."""


class HyperbolicOrbitError(DopplocError):
    """Orbit is not elliptic (e >= 1); unsupported."""


class DegenerateOrbitError(DopplocError):
    """Orbit has (near-)zero angular momentum; elements undefined."""
