"""Exception types raised across the package."""


class SpdcForgeError(Exception):
    """Base class for all errors raised by spdc_forge."""


class OutOfValidityRange(SpdcForgeError, ValueError):
    """Wavelength or temperature lies outside a dispersion model's fit range."""


class CoefficientSetError(SpdcForgeError):
    """A coefficient data file is missing or does not follow the schema."""


class DegenerateMismatch(SpdcForgeError):
    """Zeroth-order phase mismatch vanishes, so no poling period is defined."""


class NoRootInBracket(SpdcForgeError):
    """Group-velocity matching has no solution in the scanned frequency range."""


class NoMergeInBracket(SpdcForgeError):
    """The two marginal peaks do not merge inside the temperature bracket."""


class GridTooCoarse(SpdcForgeError):
    """The frequency grid undersamples the phase-matching fringes."""


class NoPeak(SpdcForgeError):
    """A spectrum is all-zero or flat."""


class SpanTooNarrow(SpdcForgeError):
    """A spectrum does not extend far enough to resolve its width."""


class EmptyStream(SpdcForgeError):
    """A tag stream has no events."""


class NoCorrectedCoincidences(SpdcForgeError):
    """No coincidences remain after subtracting accidentals."""


class AccidentalsDominate(SpdcForgeError):
    """Measured coincidences do not exceed the accidental estimate."""


class TagFormatError(SpdcForgeError, ValueError):
    """A tag file row could not be parsed."""


class ConfigError(SpdcForgeError, ValueError):
    """A run configuration failed validation."""
