"""Quadratic-manifold baselines: POD-anchored and greedily selected linear blocks.

Both variants write the approximation as u ~ shift + V q + W Psi(q) with
q = V^T M (u - shift).  The linear block V is either the leading POD modes
(QSVDM) or a greedy selection out of a larger POD candidate pool (QGM); the
correction W always comes from the least-squares fit of the projection
residuals against the feature map.
"""

from dataclasses import dataclass

import numpy as np

from .basis import SnapshotMatrix, pod
from .errors import DimensionMismatch
from .features import FeatureMap
from .numerics import InnerProduct, SubspaceBasis
from .regression import fit_least_squares


@dataclass
class QuadManifold:
    """Linear block, correction block, feature map and optional mean shift."""

    V: SubspaceBasis
    W: np.ndarray
    feature_map: FeatureMap
    shift: np.ndarray
    training_objective: float = None  # Frobenius norm of the training residual

    @property
    def n(self):
        return self.V.k


def _prepare(snapshots, metric, centered):
    data = snapshots.centered() if centered else snapshots
    shift = data.centered_mean if centered else np.zeros(data.columns.shape[0])
    return data, shift


def _fit_correction(columns, basis, feature_map):
    """W and the residual Frobenius norm for a fixed linear block."""
    q = basis.project_coefficients(columns)
    targets = columns - basis.columns @ q
    W = fit_least_squares(feature_map(q), targets)
    residual = targets - W @ feature_map(q)
    return W, float(np.linalg.norm(residual))


def _make_map(map_kind, n, degree=2):
    if isinstance(map_kind, FeatureMap):
        if map_kind.input_dim != n:
            raise DimensionMismatch(
                f"feature map expects {map_kind.input_dim} inputs, linear block has {n}"
            )
        return map_kind
    return FeatureMap(map_kind, n, degree=degree)


def qsvdm_train(snapshots, n, map_kind="homogeneous_quadratic", centered=False,
                metric=None):
    """Quadratic manifold with the first n POD modes as the linear block."""
    metric = metric or InnerProduct.identity(snapshots.columns.shape[0])
    data, shift = _prepare(snapshots, metric, centered)
    modes = pod(data, metric, n)
    feature_map = _make_map(map_kind, n)
    W, objective = _fit_correction(data.columns, modes.basis, feature_map)
    return QuadManifold(V=modes.basis, W=W, feature_map=feature_map,
                        shift=shift, training_objective=objective)


def qgm_train(snapshots, n, r, map_kind="homogeneous_quadratic", centered=False,
              metric=None):
    """Quadratic manifold with the linear block greedily chosen from a POD pool.

    Pool = first r POD modes; each step adds the candidate whose refitted
    correction minimizes the total reconstruction error (ties break to the
    lowest mode index).
    """
    metric = metric or InnerProduct.identity(snapshots.columns.shape[0])
    data, shift = _prepare(snapshots, metric, centered)
    if not (n <= r):
        raise DimensionMismatch(f"need n <= r, got n={n}, r={r}")
    pool = pod(data, metric, r)   # raises RankDeficient if r exceeds the rank

    chosen = []
    best_W, best_obj, best_map = None, None, None
    for _ in range(n):
        step_best = None
        for cand in range(r):
            if cand in chosen:
                continue
            trial = chosen + [cand]
            basis = SubspaceBasis(pool.basis.columns[:, trial], metric)
            feature_map = _make_map(map_kind, len(trial))
            W, objective = _fit_correction(data.columns, basis, feature_map)
            if step_best is None or objective < step_best[0]:
                step_best = (objective, cand, W, feature_map)
        best_obj, pick, best_W, best_map = step_best
        chosen.append(pick)

    basis = SubspaceBasis(pool.basis.columns[:, chosen], metric)
    return QuadManifold(V=basis, W=best_W, feature_map=best_map,
                        shift=shift, training_objective=best_obj)


def quad_reconstruct(manifold, snapshot=None, q=None):
    """Reconstruction shift + V q + W Psi(q); q defaults to the encoding of
    the given snapshot."""
    if q is None:
        if snapshot is None:
            raise DimensionMismatch("pass a snapshot or reduced coordinates")
        s = np.asarray(snapshot, dtype=float)
        data = s - (manifold.shift[:, None] if s.ndim == 2 else manifold.shift)
        q = manifold.V.project_coefficients(data)
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    lift = manifold.V.columns @ q + manifold.W @ manifold.feature_map(q)
    if single:
        return manifold.shift + lift
    return manifold.shift[:, None] + lift


def reconstruction_errors(manifold, snapshots, relative=True):
    """Per-column X-norm reconstruction errors of the manifold."""
    S = snapshots.columns if isinstance(snapshots, SnapshotMatrix) else np.atleast_2d(snapshots)
    metric = manifold.V.metric
    residual = S - quad_reconstruct(manifold, snapshot=S)
    errors = metric.column_norms(residual)
    if relative:
        scale = metric.column_norms(S)
        errors = errors / np.where(scale > 0, scale, 1.0)
    return errors
