"""Parameter boxes and deterministic samplers."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainViolation


@dataclass(frozen=True)
class ParameterDomain:
    """Admissible box for the parameter vector."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise DimensionMismatch("bounds must be vectors of equal length")
        if self.lower.size < 1 or not np.all(self.lower < self.upper):
            raise DomainViolation("lower bounds must be strictly below upper bounds")

    @property
    def p(self):
        return self.lower.size

    def contains(self, mu, atol=0.0):
        mu = np.asarray(mu, dtype=float)
        return bool(np.all(mu >= self.lower - atol) and np.all(mu <= self.upper + atol))

    def sample_uniform(self, rng, count):
        """``count`` independent uniform draws, one parameter per row."""
        return self.lower + (self.upper - self.lower) * rng.random((count, self.p))

    def sample_latin_hypercube(self, rng, count):
        """Latin-hypercube draws: one stratified sample per axis slice."""
        u = (rng.permuted(np.tile(np.arange(count), (self.p, 1)), axis=1).T
             + rng.random((count, self.p))) / count
        return self.lower + (self.upper - self.lower) * u


def fin_domain(p):
    """Default admissible box: conductivities in [0.1, 10], Biot in [0.01, 1]."""
    lower = np.full(p, 0.1)
    upper = np.full(p, 10.0)
    lower[-1], upper[-1] = 0.01, 1.0
    return ParameterDomain(lower, upper)


def fin_reference(p):
    """Default reference parameter: unit conductivities, Biot 0.1."""
    mu = np.ones(p)
    mu[-1] = 0.1
    return mu
