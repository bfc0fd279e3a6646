"""Exception and warning types shared across the package."""


class NumericFailure(ArithmeticError):
    """A numerical routine produced non-finite intermediates it cannot recover from."""


class DegenerateDistributionError(ValueError):
    """All coefficient row sums are zero and no floor was given; no atom distribution exists."""


class AtomUnusedError(RuntimeError):
    """The closed-form atom update has a zero denominator; the atom must be replaced."""


class TransportSizeError(ValueError):
    """The instance exceeds the exact-solver cap; use the Sinkhorn solver instead."""


class ModelFormatError(ValueError):
    """A model file is malformed; the message carries the byte offset of the failure."""


class UnsupportedVersionError(ModelFormatError):
    """A model file declares a container version this build cannot read."""


class DegenerateSupportWarning(RuntimeWarning):
    """Sparse coding hit a rank-deficient support and stopped early for a signal."""


class ConvergenceWarning(RuntimeWarning):
    """An iterative solver stopped at its iteration cap before reaching tolerance."""
