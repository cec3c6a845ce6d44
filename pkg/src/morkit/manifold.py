"""Local subspace diagnostics of the solution manifold around a reference point.

Snapshots u(mu* + r * scale . nu) - u* sampled at directions nu in the unit
ball are compared, as r shrinks, against the reference subspaces built from
exact parameter sensitivities: the span of first derivatives (tangent block)
and the tangent-filtered span of second derivatives (curvature block).  The
measured quantities are principal-angle distances and regression residuals,
each summarized by a log-log slope over the radius series.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DomainViolation, RankDeficient, SamplingDegenerate,
                     TooFewPoints)
from .features import FeatureMap, vecsym
from .fin import solve_high_fidelity, solve_second_sensitivity, solve_sensitivity
from .numerics import (SubspaceBasis, principal_angles, procrustes_align,
                       weighted_svd)
from .regression import fit_least_squares

ROUNDOFF_EPS = 1e-14  # exclude radii with r^2 (first order) or r^4 below this


def _matrix_rank(A, tol=1e-10):
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.count_nonzero(s > tol * s[0])) if s.size else 0


def sample_directions(q, M, seed=0, rng=None, symmetric=False, min_skew=0.0):
    """M directions in the closed unit ball of R^q, quadratically rich.

    Resamples (up to 100 times) until the direction matrix has rank q and the
    matrix of vecsym(nu nu^T) columns has rank q(q+1)/2.  With ``symmetric``
    the set is closed under negation (odd moments vanish exactly), which
    needs one extra unpaired zero direction when M is odd.  ``min_skew``
    additionally rejects draws whose relative third moments nearly vanish --
    an atypical draw that would masquerade as the symmetric special case
    over a finite radius window.
    """
    m = q * (q + 1) // 2
    if M < m + q:
        raise SamplingDegenerate(f"need at least {m + q} directions, got {M}")
    rng = np.random.default_rng(seed) if rng is None else rng
    for _ in range(100):
        if symmetric:
            half = rng.standard_normal((q, (M + 1) // 2))
            half /= np.linalg.norm(half, axis=0)
            half *= rng.random((M + 1) // 2) ** (1.0 / q)
            P = np.concatenate([half, -half], axis=1)[:, :M]
            if M % 2 == 1:
                P[:, -1] = 0.0
        else:
            P = rng.standard_normal((q, M))
            P /= np.linalg.norm(P, axis=0)
            P *= rng.random(M) ** (1.0 / q)
        P2 = quadratic_direction_features(P)
        if _matrix_rank(P) != q or _matrix_rank(P2) != m:
            continue
        if min_skew > 0.0 and not symmetric:
            skew = np.abs(np.sum(P**3, axis=1)) / np.sum(np.abs(P) ** 3, axis=1)
            if float(skew.min()) < min_skew:
                continue
        return P
    raise SamplingDegenerate(f"no rank-(q={q}, m={m}) direction set after 100 attempts")


def quadratic_direction_features(P):
    """Columns vecsym(nu nu^T) for each direction column nu."""
    q = P.shape[0]
    iu, ju = np.triu_indices(q)
    return P[iu] * P[ju]


@dataclass
class LocalChart:
    """Reference point, direction samples, and cached local solves.

    Chart coordinates nu map to parameters mu* + scales . nu, where the
    per-axis scale defaults to the distance from mu* to the nearer domain
    boundary, so every r <= 1 stays admissible.  ``axis_map`` redirects chart
    coordinates to parameter axes (used to build deliberately rank-deficient
    control charts).
    """

    model: object
    mu_star: np.ndarray
    directions: np.ndarray
    scales: np.ndarray = None
    axis_map: np.ndarray = None
    u_star: np.ndarray = None
    _solution_cache: dict = field(default_factory=dict, repr=False)
    _svd_cache: dict = field(default_factory=dict, repr=False)
    _sens_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.mu_star = np.asarray(self.mu_star, dtype=float)
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        norms = np.linalg.norm(self.directions, axis=0)
        if np.any(norms > 1.0 + 1e-12):
            raise SamplingDegenerate("directions must lie in the closed unit ball")
        if self.axis_map is None:
            self.axis_map = np.arange(self.directions.shape[0])
        self.axis_map = np.asarray(self.axis_map, dtype=int)
        if self.scales is None:
            domain = self.model.domain
            dist = np.minimum(self.mu_star - domain.lower, domain.upper - self.mu_star)
            self.scales = dist[self.axis_map]
        self.scales = np.asarray(self.scales, dtype=float)
        if self.u_star is None:
            self.u_star = solve_high_fidelity(self.model, self.mu_star)

    @property
    def q(self):
        return self.directions.shape[0]

    @property
    def m(self):
        return self.q * (self.q + 1) // 2

    @property
    def sample_count(self):
        return self.directions.shape[1]

    def parameter_at(self, nu):
        """Physical parameter for chart coordinates nu (nu already r-scaled)."""
        mu = self.mu_star.copy()
        np.add.at(mu, self.axis_map, self.scales * np.asarray(nu, dtype=float))
        return mu

    def state_at(self, nu):
        """Centered solution v(nu) = u(mu(nu)) - u*, cached by coordinates."""
        nu = np.asarray(nu, dtype=float)
        key = nu.tobytes()
        if key not in self._solution_cache:
            mu = self.parameter_at(nu)
            if not self.model.domain.contains(mu, atol=1e-12):
                raise DomainViolation(f"chart point leaves the domain: mu={mu}")
            self._solution_cache[key] = self.model.solve(mu) - self.u_star
        return self._solution_cache[key]

    def jacobian(self, nu=None):
        """Columns scale_j * du/dmu_{axis(j)} at the chart point nu."""
        nu = np.zeros(self.q) if nu is None else np.asarray(nu, dtype=float)
        key = nu.tobytes()
        if key not in self._sens_cache:
            mu = self.parameter_at(nu)
            u = self.state_at(nu) + self.u_star
            cols = [
                self.scales[j] * solve_sensitivity(self.model, mu, self.axis_map[j], u)
                for j in range(self.q)
            ]
            self._sens_cache[key] = np.column_stack(cols)
        return self._sens_cache[key]

    def second_derivatives(self):
        """vecsym-ordered columns of scale_i scale_j * d2u/dmu_i dmu_j at nu=0."""
        key = "second"
        if key not in self._sens_cache:
            mu = self.mu_star
            u = self.u_star
            first = [solve_sensitivity(self.model, mu, self.axis_map[j], u)
                     for j in range(self.q)]
            cols = []
            for i in range(self.q):
                for j in range(i, self.q):
                    d2 = solve_second_sensitivity(
                        self.model, mu, self.axis_map[i], self.axis_map[j],
                        first[i], first[j])
                    cols.append(self.scales[i] * self.scales[j] * d2)
            self._sens_cache[key] = np.column_stack(cols)
        return self._sens_cache[key]

    def modes_at(self, r, filtered=False):
        """Weighted-SVD of the scaled snapshot matrix at radius r (cached)."""
        key = (float(r), bool(filtered))
        if key not in self._svd_cache:
            S = scaled_snapshots(self, r).S_r
            if filtered:
                tangent = tangent_reference(self)
                S = S - tangent.columns @ tangent.project_coefficients(S)
            basis, sigma, _ = weighted_svd(S, self.model.metric)
            self._svd_cache[key] = (basis, sigma)
        return self._svd_cache[key]


@dataclass
class ScaledSnapshots:
    """Centered snapshot matrix at one sampling radius."""

    r: float
    S_r: np.ndarray


def scaled_snapshots(chart, r):
    """Columns u(mu* + r * scale . nu_i) - u* for every sampled direction."""
    bad = []
    for i in range(chart.sample_count):
        mu = chart.parameter_at(r * chart.directions[:, i])
        if not chart.model.domain.contains(mu, atol=1e-12):
            bad.append(i)
    if bad:
        raise DomainViolation(f"{len(bad)} chart points leave the domain at r={r}",
                              indices=bad)
    cols = [chart.state_at(r * chart.directions[:, i])
            for i in range(chart.sample_count)]
    return ScaledSnapshots(r=float(r), S_r=np.column_stack(cols))


def tangent_reference(chart):
    """M-orthonormal basis of the span of first parameter derivatives.

    Left singular vectors of J P where J holds the scaled sensitivities and
    P the directions; P full rank makes this the range of J itself.
    """
    J = chart.jacobian()
    A0 = J @ chart.directions
    basis, sigma, _ = weighted_svd(A0, chart.model.metric)
    rank = int(np.count_nonzero(sigma > 1e-10 * sigma[0]))
    if rank < chart.q:
        raise RankDeficient(
            f"sensitivity Jacobian has rank {rank} < q={chart.q}", observed_rank=rank
        )
    return SubspaceBasis(basis.columns[:, : chart.q], chart.model.metric)


def curvature_reference(chart, strict=True):
    """Tangent-filtered span of second derivatives (the curvature block).

    Returns ``(basis, observed_rank)``; raises when the rank falls short of
    m = q(q+1)/2 and ``strict`` is set, otherwise proceeds with the
    rank-sized block.
    """
    tangent = tangent_reference(chart)
    Q_base = chart.second_derivatives()
    weights = 2.0 - (vecsym(np.eye(chart.q)) > 0)  # (2 - delta_jl) per column
    Q0 = (Q_base * weights) @ quadratic_direction_features(chart.directions)
    filtered = Q0 - tangent.columns @ tangent.project_coefficients(Q0)
    basis, sigma, _ = weighted_svd(filtered, chart.model.metric)
    rank = int(np.count_nonzero(sigma > 1e-10 * sigma[0]))
    if rank < chart.m and strict:
        raise RankDeficient(
            f"filtered curvature block has rank {rank} < m={chart.m}",
            observed_rank=rank,
        )
    keep = min(rank, chart.m)
    return SubspaceBasis(basis.columns[:, :keep], chart.model.metric), rank


@dataclass
class ConvergenceSeries:
    """Measured values over a descending radius series with a log-log slope fit."""

    radii: np.ndarray
    values: np.ndarray
    fitted_slope: float = None
    r_squared: float = None
    points_used: int = 0
    label: str = ""
    aux: dict = field(default_factory=dict)


def loglog_slope_fit(radii, values, floor=0.0):
    """Least-squares slope of log(value) against log(radius).

    Points with value <= floor (or non-finite) are excluded; at least three
    usable points are required.
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > max(floor, 0.0))
    if int(keep.sum()) < 3:
        raise TooFewPoints(f"only {int(keep.sum())} usable points above the floor")
    x = np.log(radii[keep])
    y = np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2), int(keep.sum())


def default_radii(count=11, largest=2.0**-2, smallest=2.0**-12):
    """Geometric radius series, descending."""
    return np.geomspace(largest, smallest, count)


def tangent_convergence_experiment(chart, radii, fit=True, decay_order=1):
    """Distance of the leading empirical modes to the tangent block, per radius.

    Values are ||sin Theta||_F; radii below the round-off floor for the
    expected decay order are excluded from the slope fit (r^2 >= eps for the
    generic O(r) law, r^4 >= eps when odd direction moments vanish and the
    law upgrades to O(r^2)).  The Procrustes alignment residual
    ||U_r - U* O|| is recorded alongside.
    """
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    tangent = tangent_reference(chart)
    values, residuals = [], []
    for r in radii:
        basis, _ = chart.modes_at(r)
        leading = SubspaceBasis(basis.columns[:, : chart.q], chart.model.metric)
        angles = principal_angles(leading, tangent)
        values.append(angles.sin_theta_frobenius())
        residuals.append(procrustes_align(leading, tangent).residual)
    usable = radii[radii ** (2 * decay_order) >= ROUNDOFF_EPS]
    series = ConvergenceSeries(radii=radii, values=np.array(values),
                               label="tangent_sin_theta",
                               aux={"procrustes_residual": np.array(residuals),
                                    "usable_radii": usable})
    if fit:
        cut = np.isin(series.radii, usable)
        slope, r2, used = loglog_slope_fit(series.radii[cut], series.values[cut])
        series.fitted_slope, series.r_squared, series.points_used = slope, r2, used
    return series


def davis_kahan_tangent_bound(chart, r):
    """Right-hand side 2 ||C_r - C_0|| / delta_q of the tangent-convergence bound.

    Gram matrices are formed in the metric geometry (via the factor L), so
    this is only meant for desk-scale models used as test oracles.
    """
    metric = chart.model.metric
    A0 = metric.weigh(chart.jacobian() @ chart.directions)
    C0 = A0 @ A0.T
    S = metric.weigh(scaled_snapshots(chart, r).S_r) / r
    Cr = S @ S.T
    delta_q = np.linalg.eigvalsh(C0)[-chart.q]
    return 2.0 * np.linalg.norm(Cr - C0, 2) / delta_q


def curvature_convergence_experiment(chart, radii, filtered=True, fit=True,
                                     strict=False):
    """Distance of the second mode block to the curvature reference, per radius.

    ``filtered``: first m modes of the tangent-complement snapshots;
    otherwise modes q+1 .. q+m of the raw snapshots.  Radii with r^4 below
    the round-off floor are excluded from the slope fit.
    """
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    reference, observed_rank = curvature_reference(chart, strict=strict)
    block = reference.k
    values = []
    for r in radii:
        basis, _ = chart.modes_at(r, filtered=filtered)
        offset = 0 if filtered else chart.q
        modes = SubspaceBasis(basis.columns[:, offset : offset + block],
                              chart.model.metric)
        angles = principal_angles(modes, reference)
        values.append(angles.sin_theta_frobenius())
    usable = radii[radii**4 >= ROUNDOFF_EPS]
    label = "curvature_filtered" if filtered else "curvature_unfiltered"
    series = ConvergenceSeries(radii=radii, values=np.array(values), label=label,
                               aux={"observed_rank": observed_rank,
                                    "usable_radii": usable})
    if fit:
        cut = np.isin(series.radii, usable)
        slope, r2, used = loglog_slope_fit(series.radii[cut], series.values[cut])
        series.fitted_slope, series.r_squared, series.points_used = slope, r2, used
    return series


def singular_value_gap_series(chart, radii):
    """Ratio sigma_q / sigma_{q+1} per radius (dimension-detection signal)."""
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    ratios = []
    for r in radii:
        _, sigma = chart.modes_at(r)
        ratios.append(float(sigma[chart.q - 1] / sigma[chart.q]))
    return ConvergenceSeries(radii=radii, values=np.array(ratios),
                             label="gap_ratio")


def coefficient_map(chart, r, nu):
    """First-block coefficients of v(r*nu) in the empirical modes at radius r."""
    basis, _ = chart.modes_at(r)
    leading = SubspaceBasis(basis.columns[:, : chart.q], chart.model.metric)
    v = chart.state_at(r * np.asarray(nu, dtype=float))
    return leading.project_coefficients(v)


def second_block_coefficients(chart, r, nu, filtered=True):
    """Coefficients of v(r*nu) on the (filtered) second mode block at radius r."""
    basis, _ = chart.modes_at(r, filtered=filtered)
    offset = 0 if filtered else chart.q
    block = SubspaceBasis(basis.columns[:, offset : offset + chart.m],
                          chart.model.metric)
    v = chart.state_at(r * np.asarray(nu, dtype=float))
    return block.project_coefficients(v)


def transition_matrix(chart):
    """Change of basis U*^T M J between scaled sensitivities and tangent modes."""
    tangent = tangent_reference(chart)
    return tangent.project_coefficients(chart.jacobian())


def coefficient_linearity_experiment(chart, radii):
    """Residual of the linear prediction O^T A* (r nu) for the coefficients.

    Per radius: max_i || alpha_r(nu_i) - O_r^T A* (r nu_i) ||, expected O(r^2);
    the aux series carries the residual of a free linear regression instead.
    """
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    tangent = tangent_reference(chart)
    A_star = transition_matrix(chart)
    pred_residuals, fit_residuals = [], []
    for r in radii:
        basis, _ = chart.modes_at(r)
        leading = SubspaceBasis(basis.columns[:, : chart.q], chart.model.metric)
        O = procrustes_align(leading, tangent).rotation
        alphas = np.column_stack(
            [coefficient_map(chart, r, chart.directions[:, i])
             for i in range(chart.sample_count)]
        )
        predicted = O.T @ A_star @ (r * chart.directions)
        pred_residuals.append(float(np.linalg.norm(alphas - predicted, axis=0).max()))
        W = fit_least_squares(r * chart.directions, alphas)
        fit_residuals.append(
            float(np.linalg.norm(alphas - W @ (r * chart.directions), axis=0).max())
        )
    usable = radii[radii**2 >= ROUNDOFF_EPS]
    series = ConvergenceSeries(radii=radii, values=np.array(pred_residuals),
                               label="coefficient_linearity",
                               aux={"regression_residual": np.array(fit_residuals),
                                    "usable_radii": usable})
    cut = np.isin(series.radii, usable)
    slope, r2, used = loglog_slope_fit(series.radii[cut], series.values[cut])
    series.fitted_slope, series.r_squared, series.points_used = slope, r2, used
    return series


def jacobian_condition_check(chart, r, sample_pairs=200, jacobian_points=20,
                             rng=None):
    """Injectivity diagnostics of the coefficient map at radius r.

    ``min_singular_value``: min over sampled nu of sigma_min of the map's
    Jacobian U_r^T M J(nu).  ``injectivity_margin``: min over sampled pairs of
    ||alpha(nu1) - alpha(nu2)|| / ||nu1 - nu2|| (chart coordinates r-scaled).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    basis, _ = chart.modes_at(r)
    leading = SubspaceBasis(basis.columns[:, : chart.q], chart.model.metric)

    def ball(count):
        X = rng.standard_normal((chart.q, count))
        X /= np.linalg.norm(X, axis=0)
        return X * rng.random(count) ** (1.0 / chart.q)

    sigma_min = np.inf
    sigma_max = 0.0
    for nu in ball(jacobian_points).T:
        J = leading.project_coefficients(chart.jacobian(r * nu))
        s = np.linalg.svd(J, compute_uv=False)
        sigma_min = min(sigma_min, float(s[-1]))
        sigma_max = max(sigma_max, float(s[-1]))

    margin = np.inf
    pairs = ball(2 * sample_pairs)
    for k in range(sample_pairs):
        nu1, nu2 = pairs[:, 2 * k], pairs[:, 2 * k + 1]
        gap = np.linalg.norm(nu1 - nu2)
        if gap < 1e-12:
            continue
        a1 = coefficient_map(chart, r, nu1)
        a2 = coefficient_map(chart, r, nu2)
        margin = min(margin, float(np.linalg.norm(a1 - a2)) / (r * gap))
    return {
        "min_singular_value": float(sigma_min),
        "max_singular_value": float(sigma_max),
        "injectivity_margin": float(margin),
    }


def quadratic_law_fit(chart, radii, filtered=True, feature_kind="homogeneous_quadratic"):
    """Residual of regressing second-block on quadratic features of first-block
    coefficients, per radius.

    For the filtered block the residual decays like O(r^3) when the leading
    dependence is homogeneous quadratic; the slope fit quantifies that.
    """
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    values = []
    for r in radii:
        alphas = np.column_stack(
            [coefficient_map(chart, r, chart.directions[:, i])
             for i in range(chart.sample_count)]
        )
        betas = np.column_stack(
            [second_block_coefficients(chart, r, chart.directions[:, i],
                                       filtered=filtered)
             for i in range(chart.sample_count)]
        )
        feats = FeatureMap(feature_kind, chart.q)(alphas)
        W = fit_least_squares(feats, betas)
        residual = betas - W @ feats
        values.append(float(np.linalg.norm(residual, axis=0).max()))
    usable = radii[radii**4 >= ROUNDOFF_EPS]
    series = ConvergenceSeries(radii=radii, values=np.array(values),
                               label=f"quadratic_law_{feature_kind}",
                               aux={"usable_radii": usable})
    cut = np.isin(series.radii, usable)
    slope, r2, used = loglog_slope_fit(series.radii[cut], series.values[cut])
    series.fitted_slope, series.r_squared, series.points_used = slope, r2, used
    return series


def default_direction_count(q):
    """4m + q directions: quadratically rich sampling with margin."""
    return 4 * (q * (q + 1) // 2) + q
