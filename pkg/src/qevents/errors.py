"""Exception types shared across the package."""


class InvariantViolation(ValueError):
    """A numerical contract was violated beyond tolerance.

    Raised when an input or computed object fails one of its defining
    checks, e.g. a non-Hermitian matrix passed where a Hermitian one is
    required, a unitary check failing, or a density matrix with negative
    weight.  The message carries the offending residual.
    """


class InadmissibleThresholdError(ValueError):
    """No admissible detection threshold exists (degenerate outcome weights)."""
