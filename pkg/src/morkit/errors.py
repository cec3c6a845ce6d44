"""Exception hierarchy shared across the toolkit.

Three families matter to the CLI: configuration/input problems (exit 2),
high-fidelity solver failures (exit 3), and numerical diagnostics such as
rank deficiency or divergence (exit 4).
"""


class MorkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MorkitError):
    """Invalid or incomplete experiment configuration."""

    exit_code = 2


class FormatError(MorkitError):
    """Corrupt or truncated on-disk artifact."""

    exit_code = 2


class SolveFailure(MorkitError):
    """High-fidelity factorization or solve did not produce a valid solution."""

    exit_code = 3


class NumericalDiagnostic(MorkitError):
    """A numerical precondition failed in a recoverable, reportable way."""

    exit_code = 4


class NotSPD(NumericalDiagnostic):
    """Matrix is not symmetric positive definite."""


class NotSymmetric(NumericalDiagnostic):
    """Matrix expected to be symmetric is not."""


class DimensionMismatch(NumericalDiagnostic):
    """Operands have incompatible shapes."""


class DegenerateVector(NumericalDiagnostic):
    """Vector vanishes after projection; cannot be normalized."""


class RankDeficient(NumericalDiagnostic):
    """Observed rank below the requested/expected rank.

    Carries ``observed_rank`` so callers can proceed with a reduced block.
    """

    def __init__(self, message, observed_rank=None):
        super().__init__(message)
        self.observed_rank = observed_rank


class MeshTooCoarse(NumericalDiagnostic):
    """A conductivity region received no elements at the requested density."""


class NonCoercive(NumericalDiagnostic):
    """An affine coefficient is non-positive; coercivity bound undefined."""


class InfeasibleConstraints(NumericalDiagnostic):
    """Normalization constraints of the synthetic snapshot family have no real solution."""


class InsufficientData(NumericalDiagnostic):
    """Too few samples to fit the requested regression model."""


class SamplingDegenerate(NumericalDiagnostic):
    """Direction sampling failed to reach the required rank after resampling."""


class DomainViolation(NumericalDiagnostic):
    """Requested parameters fall outside the admissible box."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class StaleState(NumericalDiagnostic):
    """Offline estimator data no longer matches the basis it was built for."""


class Diverged(NumericalDiagnostic):
    """Fixed-point iteration residual grew far beyond its running minimum."""


class NoConvergence(NumericalDiagnostic):
    """Iteration budget exhausted before reaching the tolerance."""


class TooFewPoints(NumericalDiagnostic):
    """Not enough usable data points for a slope fit."""
