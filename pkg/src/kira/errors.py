"""Exception hierarchy shared across the toolkit."""


class KiraError(Exception):
    """Base class for all toolkit errors."""


# --- FITS ---

class FitsError(KiraError):
    """Base class for FITS parse/serialize failures."""


class MalformedHeader(FitsError):
    """Header block is missing END, has bad card syntax, or bad structure."""


class UnsupportedBitpix(FitsError):
    """BITPIX value outside {8, 16, 32, -32, -64}."""


class UnsupportedImage(FitsError):
    """Primary HDU is not a single 2-D image."""


class TruncatedData(FitsError):
    """Image payload shorter than NAXIS1 * NAXIS2 * |BITPIX| / 8 bytes."""


class DimensionOverflow(FitsError):
    """Axis length exceeds what the header integer field can represent."""


# --- extraction / photometry ---

class DimensionMismatch(KiraError):
    """Operands have incompatible shapes."""


class NegativeRadius(KiraError):
    """Circular aperture radius below zero."""


class InvalidAxes(KiraError):
    """Ellipse axes violate a >= b > 0."""


class NotAnEllipse(KiraError):
    """Coefficient triple is not positive definite."""


# --- dataflow ---

class ZeroPartitions(KiraError):
    """Requested partition count below one."""


class EmptyCollection(KiraError):
    """reduce() over a collection with no elements."""


class NoSuchDirectory(KiraError):
    """Input directory missing or not ingested."""


class JobFailed(KiraError):
    """A task exhausted its retry budget; job aborted.

    Carries (stage, partition) of the failing task for attribution.
    """

    def __init__(self, message, stage=None, partition=None):
        super().__init__(message)
        self.stage = stage
        self.partition = partition


# --- block store ---

class UnknownPath(KiraError):
    """Path was never ingested into the block map."""
