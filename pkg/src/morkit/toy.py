"""Analytic 2-D snapshot family with an exactly quadratic second coordinate.

Snapshots s_i = (c1 * a * mu_i, c2 * (b + g * mu_i^2)) on a symmetric grid.
The scalars (a, b, g) are fixed so that the two coordinate sequences are
discretely orthonormal and the second has zero mean; the weighted-SVD modes
of the emitted matrix are then exactly the coordinate axes, in order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleConstraints


@dataclass(frozen=True)
class ToySnapshotConfig:
    count: int
    mu_max: float
    c1: float
    c2: float
    alpha: float
    beta: float
    gamma: float
    grid: np.ndarray


def build_toy_quadratic(count=41, mu_max=1.0, c1=1.0, c2=0.5, beta_sign=1):
    """Return the resolved configuration and the 2 x count snapshot matrix."""
    if count < 3:
        raise InfeasibleConstraints("need at least 3 samples")
    if not (c1 > c2 > 0):
        raise InfeasibleConstraints(f"weights must satisfy c1 > c2 > 0, got {c1}, {c2}")
    grid = np.linspace(-mu_max, mu_max, count)
    m2 = float(np.mean(grid**2))
    if m2 <= 0:
        raise InfeasibleConstraints("degenerate grid: zero second moment")
    alpha = 1.0 / np.sqrt(m2)
    # zero-mean choice for the second coordinate: gamma = -beta / mean(mu^2)
    even_part = 1.0 - grid**2 / m2
    norm_sq = float(np.mean(even_part**2))
    if norm_sq <= 1e-30:
        raise InfeasibleConstraints("normalization constraint has no real solution")
    beta = np.copysign(1.0 / np.sqrt(norm_sq), beta_sign)
    gamma = -beta / m2
    snapshots = np.vstack([c1 * alpha * grid, c2 * (beta + gamma * grid**2)])
    config = ToySnapshotConfig(count=count, mu_max=mu_max, c1=c1, c2=c2,
                               alpha=alpha, beta=beta, gamma=gamma, grid=grid)
    return config, snapshots
