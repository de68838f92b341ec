"""Exception hierarchy shared across the package."""


class SynthSuspError(Exception):
    """Base class for all errors raised by synthsusp."""


class GridFormatError(SynthSuspError):
    """Malformed .sgrid header or invalid grid metadata."""


class PayloadLengthError(GridFormatError):
    """The .sgrid payload does not hold exactly the declared number of floats."""


class NonFiniteError(SynthSuspError):
    """A NaN or Inf was found in image data."""

    def __init__(self, channel, row, col, message=None):
        self.channel = channel
        self.row = row
        self.col = col
        super().__init__(message or f"non-finite value at (channel={channel}, row={row}, col={col})")


class MaskError(SynthSuspError):
    """Invalid mask, malformed .smask entry or empty collection."""


class PlacementError(MaskError):
    """A mask cannot be placed on a grid."""


class ReportError(SynthSuspError):
    """Invalid rules file."""


class UnclassifiableReport(ReportError):
    """A report lacks a section required for classification."""


class SynthesisError(SynthSuspError):
    """A synthesizer failed on a request."""


class UnsolvableError(SynthesisError):
    """The masked region has no Dirichlet data to interpolate from."""


class ShapeMismatchError(SynthSuspError):
    """Two arrays that must share a shape do not."""


class ExchangeTimeout(SynthesisError):
    """No external response appeared within the timeout."""


class EvaluationError(SynthSuspError):
    """Invalid input to ROC/FROC analysis."""


class PhantomError(SynthSuspError):
    """Phantom generation failed."""
