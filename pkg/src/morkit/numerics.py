"""Dense decompositions and subspace geometry in a weighted inner product.

All bases produced here are orthonormal in the metric induced by a symmetric
positive-definite matrix M (the discrete X-inner product). M is factored as
M = L^T L so that the weighted SVD of a snapshot matrix S is the plain SVD of
L S, and the modes L^{-1} U are M-orthonormal.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateVector, DimensionMismatch, NotSPD

SYMMETRY_RTOL = 1e-12
#: relative eigenvalue drop tolerance; squared singular values halve precision
EIG_DROP_RTOL = 1e-14
EIG_DROP_ABS = 1e-28


def _sym_defect(M):
    if sp.issparse(M):
        num = spla.norm(M - M.T)
        den = spla.norm(M)
    else:
        num = np.linalg.norm(M - M.T)
        den = np.linalg.norm(M)
    return num / den if den > 0 else num


class InnerProduct:
    """SPD metric M with a triangular factor satisfying M = L^T L.

    The factor is the upper-triangular Cholesky factor; it is built lazily
    for sparse inputs since only the weighted-SVD route needs it.  Solves
    with M (Riesz representers) go through a cached sparse LU.
    """

    def __init__(self, matrix, factor=None, validate=True):
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatch(f"metric must be square, got {matrix.shape}")
        self.matrix = matrix
        self._factor = factor
        self._solver = None
        if validate:
            defect = _sym_defect(matrix)
            if defect > SYMMETRY_RTOL * 10:
                raise NotSPD(f"metric not symmetric: relative defect {defect:.3e}")

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def factor(self):
        """Upper-triangular L with M = L^T L (dense)."""
        if self._factor is None:
            dense = self.matrix.toarray() if sp.issparse(self.matrix) else self.matrix
            try:
                self._factor = sla.cholesky(dense, lower=False)
            except sla.LinAlgError as exc:
                raise NotSPD(f"Cholesky failed: {exc}") from exc
        return self._factor

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), factor=np.eye(n), validate=False)

    def apply(self, X):
        """M @ X for a vector or matrix of columns."""
        return self.matrix @ X

    def inner(self, u, v):
        return float(u @ (self.matrix @ v))

    def norm(self, u):
        value = u @ (self.matrix @ u)
        return float(np.sqrt(max(value, 0.0)))

    def column_norms(self, X):
        sq = np.einsum("ij,ij->j", X, self.matrix @ X)
        return np.sqrt(np.maximum(sq, 0.0))

    def weigh(self, X):
        """L @ X, mapping M-geometry to Euclidean geometry."""
        return self.factor @ X

    def unweigh(self, Y):
        """L^{-1} @ Y, the inverse of :meth:`weigh`."""
        return sla.solve_triangular(self.factor, Y, lower=False)

    def riesz(self, b):
        """Solve M x = b (Riesz representer of the functional with vector b)."""
        if self._solver is None:
            if sp.issparse(self.matrix):
                self._solver = spla.splu(sp.csc_matrix(self.matrix)).solve
            else:
                cho = sla.cho_factor(self.matrix)
                self._solver = lambda rhs: sla.cho_solve(cho, rhs)
        return self._solver(b)

    def dual_norm(self, b):
        """Norm of the functional v -> b^T v in the dual of (R^n, M)."""
        value = float(b @ self.riesz(b))
        return float(np.sqrt(max(value, 0.0)))


def cholesky_spd(M):
    """Factor a symmetric positive-definite matrix as M = L^T L.

    Raises :class:`NotSPD` when the symmetry defect exceeds tolerance or a
    Cholesky pivot is non-positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    defect = _sym_defect(M)
    if defect > SYMMETRY_RTOL * 10:
        raise NotSPD(f"matrix not symmetric: relative defect {defect:.3e}")
    Msym = 0.5 * (M + M.T)
    try:
        L = sla.cholesky(Msym, lower=False)
    except sla.LinAlgError as exc:
        raise NotSPD(f"non-positive pivot: {exc}") from exc
    return InnerProduct(Msym, factor=L, validate=False)


@dataclass
class SubspaceBasis:
    """Matrix of M-orthonormal columns together with its metric."""

    columns: np.ndarray
    metric: InnerProduct

    def __post_init__(self):
        self.columns = np.atleast_2d(np.asarray(self.columns, dtype=float))
        if self.columns.shape[0] != self.metric.dim:
            raise DimensionMismatch(
                f"basis has {self.columns.shape[0]} rows, metric dimension is {self.metric.dim}"
            )

    @property
    def k(self):
        return self.columns.shape[1]

    def orthonormality_defect(self):
        G = self.columns.T @ self.metric.apply(self.columns)
        return float(np.linalg.norm(G - np.eye(self.k)))

    def check(self, rtol=1e-10):
        defect = self.orthonormality_defect()
        if defect > rtol * np.sqrt(max(self.k, 1)):
            raise NotSPD(f"columns not M-orthonormal: defect {defect:.3e}")
        return self

    def project_coefficients(self, X):
        """Coefficients V^T M X of the M-orthogonal projection onto the span."""
        return self.columns.T @ self.metric.apply(X)

    def project(self, X):
        return self.columns @ self.project_coefficients(X)


@dataclass
class PrincipalAngles:
    """Canonical angles between two equal-dimensional subspaces."""

    angles: np.ndarray   # radians, ascending
    cosines: np.ndarray  # in [0, 1], descending

    @property
    def largest(self):
        return float(self.angles[-1])

    def sin_theta_frobenius(self):
        return float(np.linalg.norm(np.sin(self.angles)))


@dataclass
class AlignmentResult:
    """Orthogonal alignment of one basis onto another."""

    rotation: np.ndarray
    residual: float


def _fix_mode_signs(modes, right=None):
    """Make the largest-magnitude entry of each column positive.

    Resolves the sign ambiguity of singular vectors so fixtures are
    reproducible; the paired right vectors are flipped consistently.
    """
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    modes = modes * signs
    if right is not None:
        right = right * signs
    return modes, right


def weighted_svd(S, metric):
    """SVD of a snapshot matrix in the metric geometry.

    Returns ``(modes, singular_values, right_vectors)`` where the modes are
    M-orthonormal, obtained as L^{-1} U from the plain SVD of L S.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != metric.dim:
        raise DimensionMismatch(
            f"snapshots have {S.shape[0]} rows, metric dimension is {metric.dim}"
        )
    if S.shape[1] == 0:
        raise DimensionMismatch("empty snapshot matrix")
    U, sigma, Zt = sla.svd(metric.weigh(S), full_matrices=False)
    modes = metric.unweigh(U)
    modes, Z = _fix_mode_signs(modes, Zt.T)
    return SubspaceBasis(modes, metric), sigma, Z


def correlation_eig(S, metric):
    """POD modes through the correlation matrix C = S^T M S.

    Cheaper than the weighted SVD when the column count is small; returns
    all eigenvalues (descending, clipped at zero) and the modes
    S v_k / sqrt(lambda_k) for eigenvalues above the drop tolerance.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != metric.dim:
        raise DimensionMismatch(
            f"snapshots have {S.shape[0]} rows, metric dimension is {metric.dim}"
        )
    if S.shape[1] == 0:
        raise DimensionMismatch("empty snapshot matrix")
    C = S.T @ metric.apply(S)
    C = 0.5 * (C + C.T)
    lam, V = sla.eigh(C)
    order = np.argsort(lam)[::-1]
    lam = np.maximum(lam[order], 0.0)
    V = V[:, order]
    keep = lam > max(EIG_DROP_RTOL * (lam[0] if lam.size else 0.0), EIG_DROP_ABS)
    rank = int(np.count_nonzero(keep))
    modes = S @ (V[:, :rank] / np.sqrt(lam[:rank]))
    modes, _ = _fix_mode_signs(modes)
    return lam, SubspaceBasis(modes, metric)


def gram_schmidt(V, u, metric):
    """Project u against the columns of V and normalize in the metric.

    ``V`` may be None, an empty array, or a :class:`SubspaceBasis`.  A second
    projection pass is applied when heavy cancellation is detected, which
    keeps long orthonormalization sequences at working precision.
    """
    u = np.asarray(u, dtype=float)
    norm_in = metric.norm(u)
    cols = V.columns if isinstance(V, SubspaceBasis) else V
    if cols is None or np.size(cols) == 0:
        z, norm_out = u, norm_in
    else:
        cols = np.atleast_2d(cols)
        z = u - cols @ (cols.T @ metric.apply(u))
        norm_out = metric.norm(z)
        if norm_out < 0.7 * norm_in:  # DGKS criterion: reproject once
            z = z - cols @ (cols.T @ metric.apply(z))
            norm_out = metric.norm(z)
    if norm_out <= 1e-12 * norm_in or norm_out == 0.0:
        raise DegenerateVector(
            f"vector vanished after projection: |z|={norm_out:.3e}, |u|={norm_in:.3e}"
        )
    return z / norm_out


def orthonormalize(columns, metric):
    """M-orthonormal basis of the span of the given columns."""
    cols = np.atleast_2d(np.asarray(columns, dtype=float))
    basis = None
    for j in range(cols.shape[1]):
        z = gram_schmidt(basis, cols[:, j], metric)
        basis = z[:, None] if basis is None else np.column_stack([basis, z])
    return SubspaceBasis(basis, metric)


def _as_orthonormal(B, metric):
    cols = B.columns if isinstance(B, SubspaceBasis) else np.atleast_2d(np.asarray(B, float))
    basis = SubspaceBasis(cols, metric)
    # principal angles are only meaningful for orthonormal generators;
    # re-orthonormalize whenever the caller passed a raw matrix
    if basis.orthonormality_defect() > 1e-12 * np.sqrt(max(basis.k, 1)):
        basis = orthonormalize(cols, metric)
    return basis


def principal_angles(U, W, metric=None):
    """Principal angles between two subspaces of equal dimension.

    Both inputs are re-orthonormalized internally in the supplied metric, so
    raw (non-orthonormal) spanning matrices are accepted.  Cosines are the
    singular values of Q_U^T M Q_W, clamped to [0, 1]; small angles are
    recovered through the sine route (singular values of (I - P_U) Q_W),
    which stays accurate below the arccos resolution of sqrt(eps).
    """
    if metric is None:
        metric = U.metric if isinstance(U, SubspaceBasis) else W.metric
    qu = _as_orthonormal(U, metric)
    qw = _as_orthonormal(W, metric)
    if qu.k != qw.k:
        raise DimensionMismatch(f"subspace dimensions differ: {qu.k} vs {qw.k}")
    B = qu.columns.T @ metric.apply(qw.columns)
    cos = np.clip(sla.svd(B, compute_uv=False), 0.0, 1.0)  # descending
    residual = qw.columns - qu.columns @ B                  # (I - P_U) Q_W
    gram = residual.T @ metric.apply(residual)
    sin_sq = np.clip(np.sort(sla.eigvalsh(0.5 * (gram + gram.T))), 0.0, 1.0)
    sin = np.sqrt(sin_sq)                                   # ascending
    angles = np.where(cos**2 >= 0.5, np.arcsin(sin), np.arccos(cos))
    return PrincipalAngles(angles=angles, cosines=np.cos(angles))


def subspace_gap(U, W, metric=None):
    """sin of the largest principal angle (the gap between the subspaces)."""
    return float(np.sin(principal_angles(U, W, metric=metric).largest))


def procrustes_align(target, base, metric=None):
    """Best orthogonal map O minimizing ||target - base O|| in the metric.

    The residual is the metric-weighted Frobenius norm of the aligned
    difference; for M-orthonormal bases it is bounded by
    sqrt(2) ||sin Theta(target, base)||_F.
    """
    if metric is None:
        metric = target.metric if isinstance(target, SubspaceBasis) else base.metric
    T = target.columns if isinstance(target, SubspaceBasis) else np.atleast_2d(target)
    B = base.columns if isinstance(base, SubspaceBasis) else np.atleast_2d(base)
    if T.shape != B.shape:
        raise DimensionMismatch(f"shapes differ: {T.shape} vs {B.shape}")
    P, _, Qt = sla.svd(B.T @ metric.apply(T))
    O = P @ Qt
    diff = T - B @ O
    residual = float(np.sqrt(max(np.sum(diff * metric.apply(diff)), 0.0)))
    return AlignmentResult(rotation=O, residual=residual)


def detect_dimension(singular_values, max_dim=None, gap_factor=50.0):
    """Count of singular values before the first clear spectral gap.

    Higher-order Taylor blocks produce a ladder of comparably large gaps, so
    the first ratio exceeding ``gap_factor`` (not the global maximum) marks
    the intrinsic dimension.
    """
    s = np.asarray(singular_values, dtype=float)
    limit = len(s) - 1 if max_dim is None else min(max_dim, len(s) - 1)
    ratios = s[:limit] / np.maximum(s[1 : limit + 1], 1e-300)
    above = np.nonzero(ratios >= gap_factor)[0]
    if above.size:
        return int(above[0]) + 1
    return int(np.argmax(ratios)) + 1
