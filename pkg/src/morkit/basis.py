"""Reduced-basis construction: snapshots, POD, certified weak greedy, and GSS.

The a-posteriori estimator is the classical residual dual norm divided by a
min-theta coercivity lower bound, with all parameter-independent Riesz inner
products precomputed offline so that one evaluation costs O(Q^2 n^2)
independently of the high-fidelity dimension.  The offline blocks extend
column by column, which keeps the greedy loop at Q Riesz solves per iteration.
"""

from dataclasses import dataclass
import logging

import numpy as np

from .errors import (DegenerateVector, DimensionMismatch, NonCoercive,
                     RankDeficient, SolveFailure, StaleState)
from .numerics import SubspaceBasis, correlation_eig, gram_schmidt

log = logging.getLogger(__name__)


@dataclass
class SnapshotMatrix:
    """Column-stacked high-fidelity solutions with parameter provenance."""

    columns: np.ndarray
    parameters: np.ndarray
    centered_mean: np.ndarray = None

    def __post_init__(self):
        self.columns = np.atleast_2d(np.asarray(self.columns, dtype=float))
        self.parameters = np.atleast_2d(np.asarray(self.parameters, dtype=float))
        if self.columns.shape[1] != self.parameters.shape[0]:
            raise DimensionMismatch(
                f"{self.columns.shape[1]} snapshots but {self.parameters.shape[0]} parameters"
            )

    @property
    def count(self):
        return self.columns.shape[1]

    def centered(self):
        """Mean-free copy (returns self if already centered)."""
        if self.centered_mean is not None:
            return self
        mean = self.columns.mean(axis=1)
        return SnapshotMatrix(self.columns - mean[:, None], self.parameters,
                              centered_mean=mean)


@dataclass
class ReducedBasis:
    """M-orthonormal reduced basis with its construction trace."""

    basis: SubspaceBasis
    construction: str
    singular_values: np.ndarray = None      # full spectrum sqrt(lambda_k)
    eigenvalues: np.ndarray = None          # full correlation spectrum
    selected_parameters: np.ndarray = None  # greedy/GSS selection order
    estimator_trace: np.ndarray = None      # max estimator value per iteration

    @property
    def dimension(self):
        return self.basis.k

    @property
    def metric(self):
        return self.basis.metric

    def truncate(self, N):
        if N > self.dimension:
            raise DimensionMismatch(f"cannot truncate {self.dimension} modes to {N}")
        return ReducedBasis(
            basis=SubspaceBasis(self.basis.columns[:, :N], self.metric),
            construction=self.construction,
            singular_values=self.singular_values,
            eigenvalues=self.eigenvalues,
            selected_parameters=self.selected_parameters,
            estimator_trace=self.estimator_trace,
        )


def build_snapshots(model, parameters):
    """Solve the model at each parameter and stack the solutions."""
    parameters = np.atleast_2d(np.asarray(parameters, dtype=float))
    columns = np.empty((model.dof_count, parameters.shape[0]))
    for i, mu in enumerate(parameters):
        if not model.domain.contains(mu):
            raise SolveFailure(f"parameter outside domain at index {i}: {mu}")
        columns[:, i] = model.solve(mu)
    return SnapshotMatrix(columns, parameters)


def pod(snapshots, metric, N, centered=False, route="auto"):
    """Best N-dimensional subspace for the snapshots in the X-norm.

    ``route='correlation'`` goes through the correlation matrix (cheaper for
    tall snapshot matrices but squares the spectrum, losing modes below
    sqrt(eps) relative); ``route='svd'`` uses the weighted SVD directly;
    ``'auto'`` picks the correlation route and falls back to the SVD route
    when N exceeds the correlation rank.  The full spectrum is kept so the
    projection-error identity sum_i ||s_i - P s_i||^2 = sum_{k>N} lambda_k
    can be audited.
    """
    data = snapshots.centered() if centered else snapshots
    if route not in ("auto", "correlation", "svd"):
        raise DimensionMismatch(f"unknown pod route {route!r}")
    modes = None
    if route in ("auto", "correlation"):
        lam, modes = correlation_eig(data.columns, metric)
        sigma = np.sqrt(lam)
        if N > modes.k and route == "correlation":
            raise RankDeficient(
                f"requested {N} modes, correlation rank is {modes.k}",
                observed_rank=modes.k,
            )
    if modes is None or N > modes.k:
        from .numerics import weighted_svd

        modes, sigma, _ = weighted_svd(data.columns, metric)
        lam = sigma**2
        # the un-squared route resolves modes down to machine epsilon relative
        floor = max(np.finfo(float).eps * sigma[0], 1e-300)
        rank = int(np.count_nonzero(sigma > floor))
        if N > rank:
            raise RankDeficient(
                f"requested {N} modes, numerical rank is {rank}", observed_rank=rank
            )
    return ReducedBasis(
        basis=SubspaceBasis(modes.columns[:, :N], metric),
        construction="pod",
        singular_values=sigma,
        eigenvalues=lam,
        selected_parameters=data.parameters,
    )


def coercivity_lower_bound(model, mu):
    """min-theta bound min_q theta_q(mu)/theta_q(reference).

    Valid because every affine block is positive semi-definite and the
    metric is the bilinear form at the reference parameter.
    """
    theta = model.theta.evaluate(mu)
    theta_ref = model.theta.evaluate(model.reference_parameter)
    if np.any(theta <= 0):
        raise NonCoercive(f"non-positive affine coefficient at mu={mu}: {theta}")
    return float(np.min(theta / theta_ref))


def _coercivity_batch(model, thetas):
    if np.any(thetas <= 0):
        raise NonCoercive("non-positive affine coefficient in parameter batch")
    theta_ref = model.theta.evaluate(model.reference_parameter)
    return np.min(thetas / theta_ref, axis=1)


class EstimatorState:
    """Offline Riesz data for the residual dual-norm estimator.

    Residual components (rhs first, then A_q phi_j flattened j-major) have
    their Riesz representers expressed in an M-orthonormal frame built
    incrementally; ``coord`` holds those coordinates.  The dual norm is then
    the plain Euclidean norm of ``coord @ [1; -theta.alpha]``, a vector norm
    in an orthonormal frame, which stays accurate down to eps instead of the
    sqrt(eps) floor of the classical expanded quadratic form.
    """

    def __init__(self, model):
        self.Q = model.theta.count
        metric = model.metric
        f_riesz = metric.riesz(model.rhs)
        self.ff = float(model.rhs @ f_riesz)
        n = model.dof_count
        norm_f = np.sqrt(max(self.ff, 0.0))
        self.frame = (f_riesz / norm_f)[:, None]   # M-orthonormal representer frame
        self.coord = np.array([[norm_f]])          # representers in that frame
        self.columns = np.empty((n, 0))            # basis columns V
        self.reduced_ops = np.zeros((self.Q, 0, 0))
        self.reduced_rhs = np.empty(0)

    @property
    def n(self):
        return self.columns.shape[1]

    @property
    def ext_gram(self):
        return self.coord.T @ self.coord

    @property
    def fA(self):
        return self.ext_gram[0, 1:]

    @property
    def gram(self):
        return self.ext_gram[1:, 1:]

    @property
    def basis_fingerprint(self):
        return hash(self.columns.tobytes())

    def _append_representer(self, metric, riesz_vec):
        """Coordinates of one representer; grows the frame when independent."""
        weighted = metric.apply(riesz_vec)
        coords = self.frame.T @ weighted
        remainder = riesz_vec - self.frame @ coords
        # one reorthogonalization pass keeps the frame at working precision
        correction = self.frame.T @ metric.apply(remainder)
        coords = coords + correction
        remainder = remainder - self.frame @ correction
        rem_norm = metric.norm(remainder)
        scale = metric.norm(riesz_vec)
        if rem_norm > 1e-13 * scale:
            self.frame = np.column_stack([self.frame, remainder / rem_norm])
            coords = np.concatenate([coords, [rem_norm]])
            self.coord = np.vstack([self.coord, np.zeros((1, self.coord.shape[1]))])
        else:
            coords = coords[: self.frame.shape[1]]
        pad = np.zeros(self.frame.shape[1])
        pad[: len(coords)] = coords
        self.coord = np.column_stack([self.coord, pad])

    def extend(self, model, new_column):
        """Append one M-orthonormal basis column to the offline data."""
        phi = np.asarray(new_column, dtype=float)
        new_A = np.column_stack([block @ phi for block in model.affine_matrices])
        new_riesz = model.metric.riesz(new_A)
        for q in range(self.Q):
            self._append_representer(model.metric, new_riesz[:, q])

        old_n = self.n
        ops = np.zeros((self.Q, old_n + 1, old_n + 1))
        ops[:, :old_n, :old_n] = self.reduced_ops
        if old_n:
            cross = self.columns.T @ new_A                   # (n, Q)
            ops[:, :old_n, old_n] = cross.T
            ops[:, old_n, :old_n] = cross.T
        ops[:, old_n, old_n] = phi @ new_A
        self.reduced_ops = ops
        self.reduced_rhs = np.concatenate([self.reduced_rhs, [float(phi @ model.rhs)]])
        self.columns = np.column_stack([self.columns, phi])


def estimator_offline(model, V):
    """Build the full offline estimator state for a reduced basis."""
    basis = V.basis if isinstance(V, ReducedBasis) else V
    state = EstimatorState(model)
    for j in range(basis.k):
        state.extend(model, basis.columns[:, j])
    return state


def _check_state(state, V):
    basis = V.basis if isinstance(V, ReducedBasis) else V
    if basis.k != state.n or hash(basis.columns.tobytes()) != state.basis_fingerprint:
        raise StaleState("offline estimator data does not match the supplied basis")


def galerkin_coefficients(state, thetas):
    """Reduced Galerkin coefficients for a batch of affine coefficient rows."""
    thetas = np.atleast_2d(thetas)
    if state.n == 0:
        return np.zeros((len(thetas), 0))
    A_red = np.einsum("mq,qij->mij", thetas, state.reduced_ops)
    rhs = np.broadcast_to(state.reduced_rhs[:, None], (len(thetas), state.n, 1))
    return np.linalg.solve(A_red, rhs)[..., 0]


def _delta_from_blocks(state, thetas, alphas, floors):
    m = len(thetas)
    z = np.empty((m, 1 + state.n * state.Q))
    z[:, 0] = 1.0
    if state.n:
        z[:, 1:] = -np.einsum("mj,mq->mjq", alphas, thetas).reshape(m, -1)
    residual_coords = z @ state.coord.T
    values = np.einsum("mk,mk->m", residual_coords, residual_coords)
    return np.sqrt(np.maximum(values, 0.0)) / floors


def estimator_eval(state, model, V, mu, alpha=None):
    """Error bound Delta_n(mu) = ||f - A(mu) u_n||_{X'} / alpha_LB(mu).

    ``alpha`` defaults to the reduced Galerkin coefficients at mu; the inner
    solve costs O(Q n^2 + n^3).
    """
    _check_state(state, V)
    theta = model.theta.evaluate(mu)[None, :]
    if alpha is None:
        alphas = galerkin_coefficients(state, theta)
    else:
        alphas = np.asarray(alpha, dtype=float)[None, :]
    floors = _coercivity_batch(model, theta)
    return float(_delta_from_blocks(state, theta, alphas, floors)[0])


def estimator_eval_batch(state, model, V, parameters):
    """Vectorized Delta_n over a batch of parameters."""
    _check_state(state, V)
    parameters = np.atleast_2d(parameters)
    thetas = np.stack([model.theta.evaluate(mu) for mu in parameters])
    alphas = galerkin_coefficients(state, thetas)
    floors = _coercivity_batch(model, thetas)
    return _delta_from_blocks(state, thetas, alphas, floors)


def residual_dual_norm_direct(model, basis, alpha, mu):
    """Brute-force ||f - A(mu) V alpha||_{X'} (oracle for the offline blocks)."""
    cols = basis.columns if isinstance(basis, SubspaceBasis) else np.atleast_2d(basis)
    residual = model.rhs - model.assemble(mu) @ (cols @ alpha)
    return model.metric.dual_norm(residual)


def weak_greedy(model, training_set, epsilon=0.0, N_max=20, mu_init=None,
                collect_snapshots=False):
    """Certified weak greedy loop over a finite training set.

    Each iteration solves at the current parameter, appends the orthonormalized
    snapshot, and selects the next parameter maximizing the estimator (ties
    break to the lowest index).  Stops at the tolerance or at ``N_max``.
    When ``collect_snapshots`` is set the raw (un-orthonormalized) snapshots
    are returned as well, which is what the SVD-compressed variant consumes.
    """
    training_set = np.atleast_2d(np.asarray(training_set, dtype=float))
    if len(training_set) == 0:
        raise DimensionMismatch("empty training set")
    mu = np.asarray(mu_init, dtype=float) if mu_init is not None else training_set[0]

    metric = model.metric
    state = EstimatorState(model)
    raw, selected, trace = [], [], []
    columns = None
    while state.n < N_max:
        u = model.solve(mu)
        try:
            phi = gram_schmidt(columns, u, metric)
        except DegenerateVector:
            log.warning("greedy snapshot at %s is numerically in the current span; "
                        "stopping at dimension %d", mu, state.n)
            break
        raw.append(u)
        selected.append(mu)
        columns = phi[:, None] if columns is None else np.column_stack([columns, phi])
        state.extend(model, phi)
        basis = SubspaceBasis(columns, metric)
        deltas = estimator_eval_batch(state, model, basis, training_set)
        best = int(np.argmax(deltas))
        trace.append(float(deltas[best]))
        if deltas[best] <= epsilon:
            break
        mu = training_set[best]

    result = ReducedBasis(
        basis=SubspaceBasis(columns, metric),
        construction="greedy",
        selected_parameters=np.array(selected),
        estimator_trace=np.array(trace),
    )
    if collect_snapshots:
        return result, np.column_stack(raw)
    return result


def gss(model, training_set, M2, N, mu_init=None):
    """Greedy-sampled SVD: M2 greedy-selected snapshots compressed by POD to N.

    At M2 = N the compression leaves the greedy subspace unchanged (only the
    basis inside it differs), so M2 = N is allowed; M2 ~ 2N is the useful
    regime.
    """
    if not (N <= M2 <= len(np.atleast_2d(training_set))):
        raise DimensionMismatch(f"need N <= M2 <= training size, got N={N}, M2={M2}")
    greedy_basis, raw = weak_greedy(model, training_set, epsilon=0.0, N_max=M2,
                                    mu_init=mu_init, collect_snapshots=True)
    selected = SnapshotMatrix(raw, greedy_basis.selected_parameters)
    compressed = pod(selected, model.metric, min(N, raw.shape[1]))
    return ReducedBasis(
        basis=compressed.basis,
        construction="gss",
        singular_values=compressed.singular_values,
        eigenvalues=compressed.eigenvalues,
        selected_parameters=greedy_basis.selected_parameters,
        estimator_trace=greedy_basis.estimator_trace,
    )


@dataclass
class ProjectionErrors:
    errors: np.ndarray
    mean: float
    max: float
    relative: bool


def projection_error(snapshots, V, relative=False):
    """Per-column X-norm projection errors onto the basis, with summaries."""
    basis = V.basis if isinstance(V, ReducedBasis) else V
    S = snapshots.columns if isinstance(snapshots, SnapshotMatrix) else np.atleast_2d(snapshots)
    metric = basis.metric
    residual = S if basis.k == 0 else S - basis.project(S)
    errors = metric.column_norms(residual)
    if relative:
        scale = metric.column_norms(S)
        errors = errors / np.where(scale > 0, scale, 1.0)
    return ProjectionErrors(errors=errors, mean=float(errors.mean()),
                            max=float(errors.max()), relative=relative)


def nested_projection_errors(snapshots, V, dims, relative=False):
    """Projection-error summaries for every truncation in ``dims`` at once.

    Valid for M-orthonormal bases: the squared error at dimension N is the
    squared norm minus the first N squared coefficients.
    """
    basis = V.basis if isinstance(V, ReducedBasis) else V
    S = snapshots.columns if isinstance(snapshots, SnapshotMatrix) else np.atleast_2d(snapshots)
    metric = basis.metric
    coeffs = basis.project_coefficients(S)
    norms_sq = metric.column_norms(S) ** 2
    cum = np.cumsum(coeffs**2, axis=0)
    scale = np.sqrt(norms_sq) if relative else np.ones_like(norms_sq)
    scale = np.where(scale > 0, scale, 1.0)
    out = {}
    for N in dims:
        if N > basis.k:
            raise DimensionMismatch(f"dimension {N} exceeds basis size {basis.k}")
        err_sq = norms_sq - (cum[N - 1] if N > 0 else 0.0)
        errors = np.sqrt(np.maximum(err_sq, 0.0)) / scale
        out[N] = (float(errors.mean()), float(errors.max()))
    return out
