"""Compressive reduced-basis approximation: few free coefficients, the rest learned.

The solution is expanded in N reduced modes but only the first n coefficients
are unknowns; the remaining N - n are given functions of those, fitted by
regression on coefficient data.  The online problem projects the residual on
the first n modes and iterates a damped fixed point.
"""

from dataclasses import dataclass

import numpy as np

from .basis import ReducedBasis, galerkin_coefficients
from .errors import DimensionMismatch, Diverged, NoConvergence
from .regression import make_regressor


@dataclass
class RegressionReport:
    holdout_mae: np.ndarray    # per-output mean absolute error
    holdout_fraction: float
    training_samples: int


@dataclass
class NcrbaModel:
    """Reduced basis plus the map from low to high coefficients."""

    basis: ReducedBasis
    n: int
    psi_hat: object
    training_report: RegressionReport = None

    def __post_init__(self):
        if not (0 < self.n < self.basis.dimension
                or (self.n == self.basis.dimension and self.psi_hat is None)):
            raise DimensionMismatch(
                f"free coefficient count n={self.n} must lie in (0, {self.basis.dimension});"
                " n = N only for the purely linear case"
            )

    @property
    def N(self):
        return self.basis.dimension

    def encode(self, u):
        """First n projection coefficients of a state (or column batch)."""
        data = np.asarray(u, dtype=float)
        coeffs = self.basis.basis.project_coefficients(data)
        return coeffs[: self.n]


def coefficient_dataset(model, V, parameters, source="galerkin"):
    """Coefficient matrix (N x M) for training the low-to-high map.

    ``galerkin``: reduced Galerkin solves, independent of the high-fidelity
    dimension.  ``hifi``: projections of full solves (slower; oracle-grade).
    """
    basis = V if isinstance(V, ReducedBasis) else ReducedBasis(V, construction="pod")
    parameters = np.atleast_2d(parameters)
    if source == "hifi":
        columns = np.column_stack([model.solve(mu) for mu in parameters])
        return basis.basis.project_coefficients(columns)
    from .basis import estimator_offline

    state = estimator_offline(model, basis)
    thetas = np.stack([model.theta.evaluate(mu) for mu in parameters])
    return galerkin_coefficients(state, thetas).T


def ncrba_train(training, V, n, N=None, regressor_spec="polynomial",
                holdout_fraction=0.2, rng=None, **regressor_params):
    """Fit the map from the first n coefficients to the remaining N - n.

    ``training`` is a coefficient matrix (rows = modes) or a SnapshotMatrix,
    in which case coefficients come from M-projection onto V.
    """
    basis = V if isinstance(V, ReducedBasis) else ReducedBasis(V, construction="pod")
    if hasattr(training, "columns") and hasattr(training, "parameters"):
        coeffs = basis.basis.project_coefficients(training.columns)
    else:
        coeffs = np.atleast_2d(np.asarray(training, dtype=float))
    N = basis.dimension if N is None else N
    if not (n < N <= basis.dimension and coeffs.shape[0] >= N):
        raise DimensionMismatch(
            f"need n < N <= dim(V) and >= N coefficient rows; "
            f"got n={n}, N={N}, dim(V)={basis.dimension}, rows={coeffs.shape[0]}"
        )
    coeffs = coeffs[:N]
    count = coeffs.shape[1]
    n_hold = int(round(holdout_fraction * count))
    order = np.arange(count) if rng is None else rng.permutation(count)
    hold, fit = order[:n_hold], order[n_hold:]

    regressor = make_regressor(regressor_spec, **regressor_params)
    regressor.fit(coeffs[:n, fit], coeffs[n:, fit])
    if n_hold:
        pred = regressor.predict(coeffs[:n, hold])
        mae = np.abs(pred - coeffs[n:, hold]).mean(axis=1)
    else:
        mae = np.full(N - n, np.nan)
    report = RegressionReport(holdout_mae=mae, holdout_fraction=holdout_fraction,
                              training_samples=len(fit))
    return NcrbaModel(basis=basis.truncate(N), n=n, psi_hat=regressor,
                      training_report=report)


def ncrba_decode(model, alpha_low, lift=False):
    """Full coefficient vector(s) [alpha_low; psi_hat(alpha_low)], optionally
    lifted to the state space."""
    a = np.asarray(alpha_low, dtype=float)
    single = a.ndim == 1
    A = a[:, None] if single else a
    if A.shape[0] != model.n:
        raise DimensionMismatch(f"expected {model.n} free coefficients, got {A.shape[0]}")
    high = model.psi_hat.predict(A) if model.psi_hat is not None else \
        np.zeros((model.N - model.n, A.shape[1]))
    full = np.vstack([A, np.atleast_2d(high)])
    if lift:
        out = model.basis.basis.columns @ full
        return (full[:, 0], out[:, 0]) if single else (full, out)
    return full[:, 0] if single else full


@dataclass
class PicardTrace:
    residual_norms: np.ndarray
    gammas: np.ndarray
    iterations: int
    converged: bool


def ncrba_online_solve(model, hf_model, mu, gamma=None, tol=1e-10, max_iter=20000,
                       alpha0=None):
    """Damped fixed-point solve of the n-dimensional projected residual.

    Iterates alpha <- alpha - gamma * r_n(alpha) with
    r_n = V_n^T (A(mu) V [alpha; psi(alpha)] - f) in the reduced Riesz frame.
    gamma defaults to 1/lambda_max of the n x n reduced operator and is
    halved whenever the residual increases.  Returns the iterate with the
    smallest residual seen, plus the trace.
    """
    cols = model.basis.basis.columns
    n, N = model.n, model.N
    theta = hf_model.theta.evaluate(mu)
    reduced = [cols.T @ (block @ cols) for block in hf_model.affine_matrices]
    A_red = sum(t * B for t, B in zip(theta, reduced))
    f_red = cols.T @ hf_model.rhs

    if gamma is None:
        eigs = np.linalg.eigvalsh(0.5 * (A_red[:n, :n] + A_red[:n, :n].T))
        gamma = 1.0 / float(eigs[-1])
    scale = max(np.linalg.norm(f_red[:n]), 1e-300)

    alpha = np.zeros(n) if alpha0 is None else np.asarray(alpha0, dtype=float).copy()
    best_alpha, best_res = alpha.copy(), np.inf
    norms, gammas = [], []
    converged = False
    for it in range(max_iter):
        full = ncrba_decode(model, alpha)
        residual = A_red[:n] @ full - f_red[:n]
        res_norm = float(np.linalg.norm(residual))
        norms.append(res_norm)
        gammas.append(gamma)
        if res_norm < best_res:
            best_res, best_alpha = res_norm, alpha.copy()
        if res_norm <= tol * scale:
            converged = True
            break
        if res_norm > 10.0 * best_res and res_norm > tol * scale:
            raise Diverged(
                f"residual {res_norm:.3e} grew over 10x its minimum {best_res:.3e}"
            )
        if len(norms) > 1 and res_norm > norms[-2]:
            gamma *= 0.5
        alpha = alpha - gamma * residual
    trace = PicardTrace(residual_norms=np.array(norms), gammas=np.array(gammas),
                        iterations=len(norms), converged=converged)
    if not converged:
        raise NoConvergence(
            f"no convergence after {max_iter} iterations; best residual {best_res:.3e}",
        )
    return best_alpha, trace
