import numpy as np
import pytest

from morkit.basis import SnapshotMatrix, build_snapshots, pod, projection_error
from morkit.errors import (DimensionMismatch, Diverged, InsufficientData,
                           NotSymmetric)
from morkit.features import FeatureMap, vecsym
from morkit.ncrba import (NcrbaModel, coefficient_dataset, ncrba_decode,
                          ncrba_online_solve, ncrba_train)
from morkit.numerics import InnerProduct
from morkit.quadratic import qgm_train, qsvdm_train, quad_reconstruct
from morkit.regression import (NearestNeighborRegressor, PolynomialRegressor,
                               fit_least_squares)
from morkit.rng import substream
from morkit.toy import build_toy_quadratic


def toy_snapshots(count=41, **kw):
    cfg, S = build_toy_quadratic(count=count, **kw)
    return cfg, SnapshotMatrix(S, np.c_[cfg.grid])


class TestVecsym:
    def test_2x2(self):
        assert np.allclose(vecsym(np.array([[1.0, 2.0], [2.0, 3.0]])), [1, 2, 3])

    def test_length_3x3(self, rng):
        A = rng.standard_normal((3, 3))
        A = A + A.T
        assert vecsym(A).shape == (6,)

    def test_linearity(self, rng):
        A = rng.standard_normal((4, 4)); A = A + A.T
        B = rng.standard_normal((4, 4)); B = B + B.T
        assert np.allclose(vecsym(A + B), vecsym(A) + vecsym(B))

    def test_rejects_asymmetric(self, rng):
        with pytest.raises(NotSymmetric):
            vecsym(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_row_major_order(self):
        A = np.array([[11.0, 12, 13], [12, 22, 23], [13, 23, 33]])
        assert np.allclose(vecsym(A), [11, 12, 13, 22, 23, 33])


class TestFeatureMap:
    def test_homogeneous_dims(self):
        fm = FeatureMap("homogeneous_quadratic", 3)
        assert fm.output_dim == 6

    def test_full_dims(self):
        fm = FeatureMap("full_quadratic", 3)
        assert fm.output_dim == 1 + 3 + 6

    def test_polynomial_dims(self):
        fm = FeatureMap("polynomial", 2, degree=3)
        assert fm.output_dim == 10  # C(5, 3)

    def test_zero_input_full(self):
        fm = FeatureMap("full_quadratic", 4)
        out = fm(np.zeros(4))
        assert out[0] == 1.0 and np.all(out[1:] == 0.0)

    def test_scalar_homogeneous(self):
        fm = FeatureMap("homogeneous_quadratic", 1)
        assert np.allclose(fm(np.array([2.0])), [4.0])

    def test_full_hand_enumeration(self):
        fm = FeatureMap("full_quadratic", 2)
        assert np.allclose(fm(np.array([1.0, 2.0])), [1, 1, 2, 1, 2, 4])

    def test_full_matches_polynomial_degree_2(self, rng):
        q = rng.standard_normal((3, 10))
        full = FeatureMap("full_quadratic", 3)(q)
        poly = FeatureMap("polynomial", 3, degree=2)(q)
        assert np.allclose(full, poly)

    def test_homogeneous_is_vecsym_of_outer(self, rng):
        q = rng.standard_normal(4)
        assert np.allclose(FeatureMap("homogeneous_quadratic", 4)(q),
                           vecsym(np.outer(q, q)))

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatch):
            FeatureMap("full_quadratic", 3)(np.zeros(2))


class TestLeastSquares:
    def test_exact_interpolation(self, rng):
        F = rng.standard_normal((4, 30))
        W_true = rng.standard_normal((2, 4))
        T = W_true @ F
        W = fit_least_squares(F, T)
        assert np.linalg.norm(W @ F - T) < 1e-10 * np.linalg.norm(T)

    def test_single_sample_single_feature(self):
        W = fit_least_squares(np.array([[2.0]]), np.array([[6.0]]))
        assert W[0, 0] == pytest.approx(3.0)

    def test_matches_normal_equations(self, rng):
        F = rng.standard_normal((5, 40))
        T = rng.standard_normal((3, 40))
        W = fit_least_squares(F, T)
        W_ne = np.linalg.solve(F @ F.T, F @ T.T).T
        assert np.allclose(W, W_ne, atol=1e-8)

    def test_minimal_norm_on_rank_deficiency(self, rng):
        row = rng.standard_normal(20)
        F = np.vstack([row, row])  # rank 1
        T = rng.standard_normal((1, 20))
        W = fit_least_squares(F, T)
        assert W[0, 0] == pytest.approx(W[0, 1], rel=1e-10)


class TestRegressors:
    def test_polynomial_recovers_polynomial(self, rng):
        X = rng.standard_normal((2, 200))
        W = rng.standard_normal((3, 6))
        Y = W @ FeatureMap("polynomial", 2, degree=2)(X)
        reg = PolynomialRegressor(degree=2).fit(X, Y)
        assert np.abs(reg.predict(X) - Y).max() < 1e-10

    def test_polynomial_insufficient_data(self, rng):
        with pytest.raises(InsufficientData):
            PolynomialRegressor(degree=4).fit(rng.standard_normal((3, 10)),
                                              rng.standard_normal((1, 10)))

    def test_knn_exact_on_training_with_k1(self, rng):
        X = rng.standard_normal((2, 50))
        Y = rng.standard_normal((3, 50))
        reg = NearestNeighborRegressor(k=1).fit(X, Y)
        assert np.allclose(reg.predict(X), Y)

    def test_knn_single_vector(self, rng):
        X = rng.standard_normal((2, 50))
        Y = rng.standard_normal((1, 50))
        reg = NearestNeighborRegressor(k=3).fit(X, Y)
        out = reg.predict(X[:, 0])
        assert out.shape == (1,)


class TestQsvdmToy:
    def test_homogeneous_cannot_reach_constant(self):
        cfg, snaps = toy_snapshots()
        manifold = qsvdm_train(snaps, 1, "homogeneous_quadratic")
        rec = quad_reconstruct(manifold, snapshot=snaps.columns)
        i0 = np.argmin(np.abs(cfg.grid))
        residual = abs(snaps.columns[1, i0] - rec[1, i0])
        assert residual >= abs(cfg.c2 * cfg.beta) * (1 - 1e-6)

    def test_full_map_is_exact(self):
        cfg, snaps = toy_snapshots()
        manifold = qsvdm_train(snaps, 1, "full_quadratic")
        rec = quad_reconstruct(manifold, snapshot=snaps.columns)
        assert np.abs(snaps.columns - rec).max() < 1e-10

    def test_snapshots_in_span_give_zero_correction(self, rng):
        """Targets vanish when the linear block already spans the data."""
        metric = InnerProduct.identity(4)
        U, _ = np.linalg.qr(rng.standard_normal((4, 2)))
        coeffs = rng.standard_normal((2, 30))
        S = U @ coeffs
        snaps = SnapshotMatrix(S, np.arange(30)[:, None])
        manifold = qsvdm_train(snaps, 2, "homogeneous_quadratic", metric=metric)
        assert np.linalg.norm(manifold.W) < 1e-8 * np.linalg.norm(S)


class TestQgm:
    def test_pool_equal_n_matches_qsvdm(self):
        _, snaps = toy_snapshots()
        qs = qsvdm_train(snaps, 1, "full_quadratic")
        qg = qgm_train(snaps, 1, 1, "full_quadratic")
        assert np.allclose(qs.V.columns, qg.V.columns)
        assert np.allclose(qs.W, qg.W)

    def test_greedy_matches_stepwise_enumeration(self, rng):
        """Each greedy pick equals the brute-force best candidate."""
        from morkit.quadratic import _fit_correction, _make_map
        from morkit.numerics import SubspaceBasis

        metric = InnerProduct.identity(6)
        S = rng.standard_normal((6, 40))
        # inject structure so the quadratic correction matters
        S[3] = 0.5 * S[0] ** 2 - 0.2 * S[1] * S[2]
        snaps = SnapshotMatrix(S, np.arange(40)[:, None])
        manifold = qgm_train(snaps, 2, 4, "homogeneous_quadratic", metric=metric)

        pool = pod(snaps, metric, 4)
        chosen = []
        for _ in range(2):
            best = None
            for cand in range(4):
                if cand in chosen:
                    continue
                basis = SubspaceBasis(pool.basis.columns[:, chosen + [cand]], metric)
                fmap = _make_map("homogeneous_quadratic", len(chosen) + 1)
                _, obj = _fit_correction(snaps.columns, basis, fmap)
                if best is None or obj < best[0]:
                    best = (obj, cand)
            chosen.append(best[1])
        expected = pool.basis.columns[:, chosen]
        assert np.allclose(manifold.V.columns, expected)

    def test_toy_qgm_equals_qsvdm_both_maps(self):
        _, snaps = toy_snapshots()
        for kind in ("homogeneous_quadratic", "full_quadratic"):
            qs = qsvdm_train(snaps, 1, kind)
            qg = qgm_train(snaps, 1, 2, kind)
            assert np.allclose(qs.V.columns, qg.V.columns)


class TestQuadReconstruct:
    def test_zero_correction_is_linear_projection(self, rng):
        _, snaps = toy_snapshots()
        manifold = qsvdm_train(snaps, 1, "homogeneous_quadratic")
        manifold.W = np.zeros_like(manifold.W)
        rec = quad_reconstruct(manifold, snapshot=snaps.columns)
        lin = manifold.V.project(snaps.columns)
        assert np.allclose(rec, lin)

    def test_zero_coords_full_map_gives_constant(self):
        _, snaps = toy_snapshots()
        manifold = qsvdm_train(snaps, 1, "full_quadratic")
        out = quad_reconstruct(manifold, q=np.zeros(1))
        assert np.allclose(out, manifold.shift + manifold.W[:, 0])

    def test_training_error_equals_objective(self):
        _, snaps = toy_snapshots()
        manifold = qsvdm_train(snaps, 1, "homogeneous_quadratic")
        rec = quad_reconstruct(manifold, snapshot=snaps.columns)
        frob = np.linalg.norm(snaps.columns - rec)
        assert frob == pytest.approx(manifold.training_objective, rel=1e-10)


class TestFullDominatesHomogeneous:
    @pytest.mark.parametrize("seed", range(5))
    def test_training_objective_ordering(self, seed):
        rng = np.random.default_rng(4000 + seed)
        S = rng.standard_normal((8, 50))
        snaps = SnapshotMatrix(S, np.arange(50)[:, None])
        for n in (1, 2, 3):
            hom = qsvdm_train(snaps, n, "homogeneous_quadratic")
            full = qsvdm_train(snaps, n, "full_quadratic")
            assert full.training_objective <= hom.training_objective + \
                1e-10 * hom.training_objective


class TestCenteredConstantColumn:
    def test_uncentered_toy_full_map_recovers_shift(self):
        """With the zero-mean structure broken, the constant column carries it."""
        cfg, S = build_toy_quadratic(count=41)
        shift = np.array([0.0, 0.7])
        S_shifted = S + shift[:, None]
        snaps = SnapshotMatrix(S_shifted, np.c_[cfg.grid])
        manifold = qsvdm_train(snaps, 1, "full_quadratic")
        rec = quad_reconstruct(manifold, snapshot=S_shifted)
        assert np.abs(S_shifted - rec).max() < 1e-10

    def test_centered_toy_linear_column_vanishes(self):
        """Even second coordinate + odd first coordinate: no linear coupling."""
        cfg, snaps = toy_snapshots()
        manifold = qsvdm_train(snaps, 1, "full_quadratic")
        m = manifold.feature_map.output_dim
        # columns: [constant, linear, quadratic]; second row carries the data
        linear_col = manifold.W[:, 1]
        assert np.abs(linear_col).max() < 1e-10


@pytest.fixture(scope="module")
def setup(fin_p1):
    train = fin_p1.domain.sample_uniform(substream(3, "training"), 120)
    snaps = build_snapshots(fin_p1, train)
    V = pod(snaps, fin_p1.metric, 12)
    return fin_p1, V


class TestNcrba:
    def test_exact_polynomial_targets(self, rng):
        from morkit.basis import ReducedBasis
        from morkit.numerics import SubspaceBasis

        inputs = rng.standard_normal((2, 400))
        W = rng.standard_normal((4, 6))
        targets = W @ FeatureMap("polynomial", 2, degree=2)(inputs)
        coeffs = np.vstack([inputs, targets])
        basis = ReducedBasis(
            SubspaceBasis(np.eye(6), InnerProduct.identity(6)), construction="pod")
        nm = ncrba_train(coeffs, basis, n=2, N=6, regressor_spec="polynomial",
                         degree=2, rng=rng)
        pred = nm.psi_hat.predict(inputs)
        assert np.abs(pred - targets).max() < 1e-10

    def test_decode_concatenates(self, setup, rng):
        model, V = setup
        coeffs = coefficient_dataset(
            model, V, model.domain.sample_uniform(substream(5, "ds"), 2000))
        nm = ncrba_train(coeffs, V, n=2, N=12, regressor_spec="polynomial",
                         degree=6, rng=rng)
        alpha = rng.standard_normal(2)
        full = ncrba_decode(nm, alpha)
        assert full.shape == (12,)
        assert np.allclose(full[:2], alpha)

    def test_decode_triangle_inequality(self, setup, rng):
        model, V = setup
        coeffs = coefficient_dataset(
            model, V, model.domain.sample_uniform(substream(5, "ds"), 2000))
        nm = ncrba_train(coeffs, V, n=2, N=12, regressor_spec="polynomial",
                         degree=6, rng=rng)
        mu = model.domain.sample_uniform(substream(6, "t"), 1)[0]
        s = model.solve(mu)
        alpha_true = V.basis.project_coefficients(s)[:12]
        alpha_low = nm.encode(s)
        full, rec = ncrba_decode(nm, alpha_low, lift=True)
        lin_err = projection_error(s[:, None], V.truncate(12)).errors[0]
        reg_err = np.linalg.norm(full[2:] - alpha_true[2:])
        err = model.metric.norm(s - rec)
        assert err <= lin_err + reg_err + 1e-12

    def test_psi_zero_full_n_matches_galerkin(self, setup):
        from morkit.basis import estimator_offline, galerkin_coefficients

        model, V = setup
        nm = NcrbaModel(basis=V, n=12, psi_hat=None)
        mu = np.array([0.37])
        state = estimator_offline(model, V)
        alpha_gal = galerkin_coefficients(state, model.theta.evaluate(mu)[None, :])[0]
        alpha, trace = ncrba_online_solve(nm, model, mu, tol=1e-12)
        assert np.abs(alpha - alpha_gal).max() < 1e-9
        assert trace.converged

    def test_online_matches_projected_truth_on_training(self, setup, rng):
        model, V = setup
        coeffs = coefficient_dataset(
            model, V, model.domain.sample_uniform(substream(5, "ds"), 3000))
        nm = ncrba_train(coeffs, V, n=3, N=12, regressor_spec="polynomial",
                         degree=8, rng=rng)
        mu = model.domain.sample_uniform(substream(5, "ds"), 3000)[17]
        alpha, trace = ncrba_online_solve(nm, model, mu, tol=1e-11)
        truth = nm.encode(model.solve(mu))
        mae = nm.training_report.holdout_mae.max()
        assert np.abs(alpha - truth).max() <= max(50 * mae, 1e-8)

    def test_oversized_constant_step_diverges(self, setup):
        model, V = setup
        nm = NcrbaModel(basis=V, n=12, psi_hat=None)
        mu = np.array([0.37])
        with pytest.raises(Diverged):
            ncrba_online_solve(nm, model, mu, gamma=1e3, tol=1e-12)

    def test_picard_accepted_iterate_is_trace_minimum(self, setup):
        model, V = setup
        nm = NcrbaModel(basis=V, n=12, psi_hat=None)
        mu = np.array([0.55])
        alpha, trace = ncrba_online_solve(nm, model, mu, tol=1e-11)
        assert trace.residual_norms[-1] == trace.residual_norms.min()

    def test_insufficient_data_raises(self, setup, rng):
        model, V = setup
        coeffs = coefficient_dataset(
            model, V, model.domain.sample_uniform(substream(5, "ds"), 8))
        with pytest.raises(InsufficientData):
            ncrba_train(coeffs, V, n=2, N=12, regressor_spec="polynomial",
                        degree=6, rng=rng)


class TestQgmVersusQsvdm:
    def test_training_objective_not_worse_on_fin(self, fin_p2):
        """Per-step exhaustive greedy matches or beats the leading-mode block."""
        train = fin_p2.domain.sample_uniform(substream(13, "training"), 80)
        snaps = build_snapshots(fin_p2, train)
        for n in (1, 2, 3):
            qs = qsvdm_train(snaps, n, "homogeneous_quadratic", centered=True,
                             metric=fin_p2.metric)
            qg = qgm_train(snaps, n, 2 * n + 2, "homogeneous_quadratic",
                           centered=True, metric=fin_p2.metric)
            assert qg.training_objective <= qs.training_objective * (1 + 1e-9)
