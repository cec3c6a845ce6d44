"""Feature maps lifting reduced coordinates to polynomial features."""

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .errors import DimensionMismatch, NotSymmetric


def vecsym(A, tol=1e-12):
    """Upper-triangular part of a symmetric matrix, row by row.

    Order (a11, a12, ..., a1q, a22, ..., a2q, ..., aqq); length q(q+1)/2.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got {A.shape}")
    scale = np.max(np.abs(A))
    if scale > 0 and np.max(np.abs(A - A.T)) > tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    iu = np.triu_indices(A.shape[0])
    return A[iu]


def _monomial_exponents(n, degree):
    """Exponent tuples of total degree <= degree, graded-lexicographic order."""
    exps = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for idx in combo:
                e[idx] += 1
            exps.append(tuple(e))
    return exps


@dataclass(frozen=True)
class FeatureMap:
    """Polynomial feature map R^n -> R^m.

    kinds: ``homogeneous_quadratic`` (vecsym(q q^T), m = n(n+1)/2),
    ``full_quadratic`` (constant + linear + vecsym, m = 1 + n + n(n+1)/2),
    ``polynomial`` of a given total degree (m = C(n+d, d), graded-lex order).
    """

    kind: str
    input_dim: int
    degree: int = 2

    def __post_init__(self):
        if self.kind not in ("homogeneous_quadratic", "full_quadratic", "polynomial"):
            raise DimensionMismatch(f"unknown feature map kind {self.kind!r}")
        if self.input_dim < 1:
            raise DimensionMismatch("input dimension must be positive")

    @property
    def output_dim(self):
        n = self.input_dim
        if self.kind == "homogeneous_quadratic":
            return n * (n + 1) // 2
        if self.kind == "full_quadratic":
            return 1 + n + n * (n + 1) // 2
        return comb(n + self.degree, self.degree)

    def __call__(self, q):
        """Evaluate on one vector (n,) or columnwise on a batch (n, M)."""
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        Q = q[:, None] if single else q
        if Q.shape[0] != self.input_dim:
            raise DimensionMismatch(
                f"feature map expects dimension {self.input_dim}, got {Q.shape[0]}"
            )
        n = self.input_dim
        if self.kind in ("homogeneous_quadratic", "full_quadratic"):
            iu, ju = np.triu_indices(n)
            quad = Q[iu] * Q[ju]
            if self.kind == "homogeneous_quadratic":
                out = quad
            else:
                out = np.vstack([np.ones((1, Q.shape[1])), Q, quad])
        else:
            rows = [np.prod(Q**np.array(e)[:, None], axis=0)
                    for e in _monomial_exponents(n, self.degree)]
            out = np.vstack(rows)
        return out[:, 0] if single else out


def feature_eval(feature_map, q):
    return feature_map(q)
