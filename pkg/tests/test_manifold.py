import numpy as np
import pytest

from morkit.errors import (DomainViolation, RankDeficient, SamplingDegenerate,
                           TooFewPoints)
from morkit.manifold import (LocalChart, coefficient_linearity_experiment,
                             coefficient_map, curvature_convergence_experiment,
                             curvature_reference, davis_kahan_tangent_bound,
                             default_direction_count, default_radii,
                             jacobian_condition_check, loglog_slope_fit,
                             quadratic_direction_features, quadratic_law_fit,
                             sample_directions, scaled_snapshots,
                             singular_value_gap_series,
                             tangent_convergence_experiment, tangent_reference)
from morkit.numerics import principal_angles
from morkit.parameters import fin_reference
from morkit.rng import substream


@pytest.fixture(scope="module")
def chart_p2(fin_p2):
    P = sample_directions(2, default_direction_count(2), seed=11)
    return LocalChart(model=fin_p2, mu_star=fin_reference(2), directions=P)


@pytest.fixture(scope="module")
def chart_p1(fin_p1):
    P = sample_directions(1, 8, rng=substream(11, "directions-q1"), min_skew=0.2)
    return LocalChart(model=fin_p1, mu_star=fin_reference(1), directions=P)


class TestSampleDirections:
    def test_q1_values_in_ball(self):
        P = sample_directions(1, 5, seed=3)
        assert P.shape == (1, 5)
        assert np.all(np.abs(P) <= 1.0)
        assert np.any(P != 0.0)

    def test_count_precondition(self):
        with pytest.raises(SamplingDegenerate):
            sample_directions(2, 3, seed=0)  # need m + q = 5

    def test_ranks(self):
        P = sample_directions(3, 30, seed=7)
        assert np.linalg.matrix_rank(P, tol=1e-10) == 3
        P2 = quadratic_direction_features(P)
        assert np.linalg.matrix_rank(P2, tol=1e-10) == 6

    def test_symmetric_odd_moments_vanish(self):
        P = sample_directions(2, 14, seed=5, symmetric=True)
        assert np.abs(P.sum(axis=1)).max() < 1e-14
        assert np.abs((P**3).sum(axis=1)).max() < 1e-14

    def test_deterministic_under_seed(self):
        assert np.array_equal(sample_directions(2, 10, seed=42),
                              sample_directions(2, 10, seed=42))


class TestScaledSnapshots:
    def test_shape(self, chart_p1):
        snap = scaled_snapshots(chart_p1, 0.01)
        assert snap.S_r.shape == (chart_p1.model.dof_count, 8)

    def test_tiny_radius_vanishes(self, chart_p1):
        snap = scaled_snapshots(chart_p1, 1e-12)
        norms = chart_p1.model.metric.column_norms(snap.S_r)
        u_norm = chart_p1.model.metric.norm(chart_p1.u_star)
        assert norms.max() < 1e-9 * u_norm

    def test_column_norms_scale_linearly(self, chart_p2):
        radii = np.array([0.02, 0.01, 0.005, 0.0025])
        norms = [np.mean(chart_p2.model.metric.column_norms(
            scaled_snapshots(chart_p2, r).S_r)) for r in radii]
        slope = np.polyfit(np.log(radii), np.log(norms), 1)[0]
        assert 0.9 <= slope <= 1.1

    def test_domain_violation_reported(self, fin_p2):
        P = sample_directions(2, 14, seed=11)
        chart = LocalChart(model=fin_p2, mu_star=fin_reference(2), directions=P,
                           scales=np.array([100.0, 100.0]))
        with pytest.raises(DomainViolation):
            scaled_snapshots(chart, 1.0)


class TestTangentReference:
    def test_q1_is_normalized_sensitivity(self, chart_p1):
        from morkit.fin import solve_sensitivity

        basis = tangent_reference(chart_p1)
        du = solve_sensitivity(chart_p1.model, chart_p1.mu_star, 0, chart_p1.u_star)
        du = du / chart_p1.model.metric.norm(du)
        align = abs(chart_p1.model.metric.inner(basis.columns[:, 0], du))
        assert align == pytest.approx(1.0, abs=1e-10)

    def test_span_is_jacobian_range(self, chart_p2):
        basis = tangent_reference(chart_p2)
        J = chart_p2.jacobian()
        angles = principal_angles(basis, J, metric=chart_p2.model.metric)
        assert angles.largest < 1e-10

    def test_invariant_under_resampling(self, fin_p2):
        charts = [LocalChart(model=fin_p2, mu_star=fin_reference(2),
                             directions=sample_directions(2, 14, seed=s))
                  for s in (1, 2)]
        b1, b2 = tangent_reference(charts[0]), tangent_reference(charts[1])
        assert principal_angles(b1, b2).largest < 1e-8

    def test_duplicated_axis_rank_deficient(self, fin_p2):
        P = sample_directions(3, 30, seed=3)
        chart = LocalChart(model=fin_p2, mu_star=fin_reference(2), directions=P,
                           axis_map=np.array([0, 1, 0]))
        with pytest.raises(RankDeficient):
            tangent_reference(chart)


class TestCurvatureReference:
    def test_q1_single_column(self, chart_p1):
        basis, rank = curvature_reference(chart_p1)
        assert basis.k == 1 and rank >= 1

    def test_orthogonal_to_tangent(self, chart_p2):
        tangent = tangent_reference(chart_p2)
        curvature, _ = curvature_reference(chart_p2)
        cross = tangent.columns.T @ chart_p2.model.metric.apply(curvature.columns)
        assert np.abs(cross).max() < 1e-10

    def test_rank_reported(self, chart_p2):
        _, rank = curvature_reference(chart_p2, strict=False)
        assert 1 <= rank <= 3


class TestLoglogSlope:
    def test_exact_linear(self):
        r = np.geomspace(1, 1e-3, 7)
        slope, r2, used = loglog_slope_fit(r, r)
        assert slope == pytest.approx(1.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)
        assert used == 7

    def test_exact_cubic(self):
        r = np.geomspace(1, 1e-3, 7)
        slope, _, _ = loglog_slope_fit(r, r**3)
        assert slope == pytest.approx(3.0, abs=1e-10)

    def test_noisy_linear(self, rng):
        r = np.geomspace(1, 1e-3, 12)
        v = r * (1 + 0.05 * rng.standard_normal(12))
        slope, _, _ = loglog_slope_fit(r, v)
        assert 0.9 <= slope <= 1.1

    def test_floor_exclusion_and_too_few(self):
        r = np.geomspace(1, 1e-3, 5)
        v = np.array([1.0, 0.1, 1e-13, 1e-13, 1e-13])
        with pytest.raises(TooFewPoints):
            loglog_slope_fit(r, v, floor=1e-12)


class TestTangentConvergence:
    def test_p1_slope_first_order(self, chart_p1):
        series = tangent_convergence_experiment(chart_p1, default_radii(9))
        assert 0.8 <= series.fitted_slope <= 1.2

    def test_p1_symmetric_slope_second_order(self, fin_p1):
        P = sample_directions(1, 8, seed=5, symmetric=True)
        chart = LocalChart(model=fin_p1, mu_star=fin_reference(1), directions=P)
        series = tangent_convergence_experiment(chart, default_radii(11),
                                                decay_order=2)
        assert 1.8 <= series.fitted_slope <= 2.2

    def test_davis_kahan_bound_holds(self, chart_p2):
        radii = default_radii(5, 2.0**-3, 2.0**-7)
        series = tangent_convergence_experiment(chart_p2, radii)
        for r, v in zip(series.radii, series.values):
            assert v <= davis_kahan_tangent_bound(chart_p2, r) + 1e-12

    def test_alignment_residual_first_order(self, chart_p2):
        series = tangent_convergence_experiment(chart_p2, default_radii(9))
        slope, _, _ = loglog_slope_fit(series.radii,
                                       series.aux["procrustes_residual"])
        assert 0.8 <= slope <= 1.2


class TestCurvatureConvergence:
    def test_filtered_slope(self, chart_p2):
        radii = default_radii(7, 2.0**-2, 2.0**-8)
        series = curvature_convergence_experiment(chart_p2, radii, filtered=True)
        assert 0.8 <= series.fitted_slope <= 1.2

    def test_unfiltered_slope_reported(self, chart_p2):
        radii = default_radii(7, 2.0**-2, 2.0**-8)
        series = curvature_convergence_experiment(chart_p2, radii, filtered=False)
        assert np.isfinite(series.fitted_slope)

    def test_series_decreases_overall(self, chart_p2):
        radii = default_radii(7, 2.0**-2, 2.0**-8)
        series = curvature_convergence_experiment(chart_p2, radii, filtered=True)
        inversions = np.sum(np.diff(series.values) > 0)
        assert inversions <= 1
        assert series.values[0] > series.values[-1]


class TestSingularGap:
    def test_gap_grows_as_r_shrinks(self, chart_p2):
        series = singular_value_gap_series(chart_p2, default_radii(9))
        assert series.values[-1] >= 10.0 * series.values[0]

    def test_dimension_detection(self, chart_p2, chart_p1):
        from morkit.numerics import detect_dimension

        for chart in (chart_p1, chart_p2):
            _, sigma = chart.modes_at(2.0**-9)
            assert detect_dimension(sigma, max_dim=6) == chart.q


class TestCoefficientMap:
    def test_zero_direction_gives_zero(self, chart_p2):
        alpha = coefficient_map(chart_p2, 0.01, np.zeros(2))
        assert np.linalg.norm(alpha) < 1e-12

    def test_linearity_residual_second_order(self, chart_p2):
        series = coefficient_linearity_experiment(chart_p2, default_radii(8))
        assert 1.7 <= series.fitted_slope <= 2.3
        reg_slope, _, _ = loglog_slope_fit(series.radii,
                                           series.aux["regression_residual"])
        assert reg_slope >= 1.7


class TestJacobianCheck:
    def test_margins_positive(self, chart_p2):
        report = jacobian_condition_check(chart_p2, 0.05, sample_pairs=200,
                                          jacobian_points=20,
                                          rng=substream(1, "pairs"))
        assert report["injectivity_margin"] > 0
        assert report["min_singular_value"] > 0

    def test_sigma_uniform_within_factor_two(self, chart_p2):
        report = jacobian_condition_check(chart_p2, 0.02, sample_pairs=10,
                                          jacobian_points=30,
                                          rng=substream(2, "pairs"))
        assert report["max_singular_value"] <= 2.0 * report["min_singular_value"]

    def test_duplicated_parameter_detected(self, fin_p2):
        P = sample_directions(3, 30, seed=3)
        chart = LocalChart(model=fin_p2, mu_star=fin_reference(2), directions=P,
                           axis_map=np.array([0, 1, 0]))
        report = jacobian_condition_check(chart, 0.05, sample_pairs=20,
                                          jacobian_points=10,
                                          rng=substream(3, "pairs"))
        assert report["min_singular_value"] < 1e-8


class TestQuadraticLaw:
    def test_filtered_residual_slope_cubic(self, chart_p2):
        radii = default_radii(7, 2.0**-2, 2.0**-8)
        series = quadratic_law_fit(chart_p2, radii)
        assert 2.5 <= series.fitted_slope <= 3.5

    def test_feature_ablation_small_at_small_r(self, chart_p2):
        """Constant+linear features change the fit by <10% of the signal scale."""
        from morkit.manifold import coefficient_map, second_block_coefficients

        radii = default_radii(7, 2.0**-2, 2.0**-8)
        hom = quadratic_law_fit(chart_p2, radii, feature_kind="homogeneous_quadratic")
        full = quadratic_law_fit(chart_p2, radii, feature_kind="full_quadratic")
        r = radii.min()
        P = chart_p2.directions
        betas = np.column_stack([
            second_block_coefficients(chart_p2, r, P[:, i])
            for i in range(P.shape[1])])
        signal = np.linalg.norm(betas, axis=0).max()
        assert abs(hom.values[-1] - full.values[-1]) <= 0.10 * signal

    def test_unfiltered_full_beats_homogeneous(self, chart_p2):
        radii = default_radii(5, 2.0**-3, 2.0**-7)
        hom = quadratic_law_fit(chart_p2, radii, filtered=False,
                                feature_kind="homogeneous_quadratic")
        full = quadratic_law_fit(chart_p2, radii, filtered=False,
                                 feature_kind="full_quadratic")
        assert np.all(full.values <= hom.values * (1 + 1e-9))
