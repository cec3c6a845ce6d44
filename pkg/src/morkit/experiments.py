"""Experiment drivers behind the CLI subcommands.

Each driver is a pure function of (config, output directory): it builds the
model, runs the computation, writes delimited tables plus binary artifacts
into the store, and finishes with a content-hash manifest.
"""

import numpy as np

from . import __version__
from .basis import (build_snapshots, gss, nested_projection_errors, pod,
                    weak_greedy)
from .errors import ConfigError
from .fin import build_thermal_fin
from .manifold import (LocalChart, curvature_convergence_experiment,
                       default_direction_count, default_radii,
                       quadratic_law_fit, sample_directions,
                       singular_value_gap_series,
                       tangent_convergence_experiment)
from .ncrba import (coefficient_dataset, ncrba_decode, ncrba_online_solve,
                    ncrba_train)
from .parameters import fin_reference
from .quadratic import (qgm_train, qsvdm_train, quad_reconstruct,
                        reconstruction_errors)
from .rng import substream
from .storage import ArtifactStore, export_matrix_csv, load_model, save_model
from .toy import build_toy_quadratic


def _store(config, out_dir):
    return ArtifactStore(out_dir, config=config, tool_version=__version__)


def _build_model(config):
    from .fin import FinGeometry
    from .parameters import ParameterDomain

    model_cfg = config["model"]
    reference = model_cfg.get("reference")
    geometry = FinGeometry(**model_cfg.get("geometry", {}))
    domain = None
    if "domain_lower" in model_cfg or "domain_upper" in model_cfg:
        if not ("domain_lower" in model_cfg and "domain_upper" in model_cfg):
            raise ConfigError("domain bounds need both model.domain_lower and "
                              "model.domain_upper")
        domain = ParameterDomain(np.asarray(model_cfg["domain_lower"], float),
                                 np.asarray(model_cfg["domain_upper"], float))
    return build_thermal_fin(
        subfins=int(model_cfg["subfins"]),
        mesh_density=int(model_cfg["mesh_density"]),
        p=int(model_cfg["p"]),
        reference=None if reference is None else np.asarray(reference, dtype=float),
        domain=domain,
        geometry=geometry,
    )


def _m2_of(config, default):
    """Greedy iteration count: sampling section first, basis section fallback."""
    return int(config["sampling"].get("M2", config.get("basis", {}).get("M2", default)))


def _training_parameters(model, config, name="training", size_key="train_size"):
    sampling = config["sampling"]
    rng = substream(sampling["seed"], name)
    return model.domain.sample_uniform(rng, int(sampling[size_key]))


def run_snapshots(config, out_dir):
    store = _store(config, out_dir)
    model = _build_model(config)
    params = _training_parameters(model, config)
    snaps = build_snapshots(model, params)
    store.save_matrix("snapshots.mork", snaps.columns)
    export_matrix_csv(store.path("parameters.csv"), params,
                      header=[f"mu{i+1}" for i in range(params.shape[1])])
    store.write_manifest()
    return store


def _build_basis(model, config):
    basis_cfg = config["basis"]
    method = basis_cfg.get("method", "pod")
    N = int(basis_cfg.get("N", 10))
    training = _training_parameters(model, config)
    if method == "pod":
        snaps = build_snapshots(model, training)
        return pod(snaps, model.metric, N, centered=bool(basis_cfg.get("centered", False)))
    if method == "greedy":
        return weak_greedy(model, training,
                           epsilon=float(basis_cfg.get("epsilon", 0.0)),
                           N_max=int(basis_cfg.get("N_max", N)))
    if method == "gss":
        return gss(model, training, M2=_m2_of(config, 2 * N), N=N)
    raise ConfigError(f"unknown basis method {method!r}")


def run_basis(config, out_dir, method=None):
    if method is not None:
        config = {**config, "basis": {**config["basis"], "method": method}}
    store = _store(config, out_dir)
    model = _build_model(config)
    rb = _build_basis(model, config)
    store.save_matrix("basis.mork", rb.basis.columns)
    if rb.singular_values is not None:
        store.emit("singular_values.dat",
                   [np.arange(1, len(rb.singular_values) + 1), rb.singular_values],
                   ["k", "sigma"])
    if rb.selected_parameters is not None:
        export_matrix_csv(store.path("selected_parameters.csv"), rb.selected_parameters,
                          header=[f"mu{i+1}" for i in range(rb.selected_parameters.shape[1])])
    if rb.estimator_trace is not None and len(rb.estimator_trace):
        store.emit("estimator_trace.dat",
                   [np.arange(1, len(rb.estimator_trace) + 1), rb.estimator_trace],
                   ["n", "max_delta"])
    store.write_manifest()
    return store


def run_compare_bases(config, out_dir):
    """Mean/max test projection errors of greedy, POD (two sizes) and GSS."""
    store = _store(config, out_dir)
    model = _build_model(config)
    sampling = config["sampling"]
    basis_cfg = config["basis"]
    N_max = int(basis_cfg.get("N", 56))
    M2 = _m2_of(config, 100)
    pod_small = int(sampling.get("pod_size", 100))

    training = _training_parameters(model, config)
    test_params = _training_parameters(model, config, name="test", size_key="test_size")
    test = build_snapshots(model, test_params)

    train_snaps = build_snapshots(model, training)
    bases = {
        f"greedy_M{len(training)}": weak_greedy(model, training, N_max=N_max),
        f"pod_M{len(training)}": pod(train_snaps, model.metric, N_max),
        f"pod_M{pod_small}": pod(
            build_snapshots(model, training[:pod_small]), model.metric,
            min(N_max, pod_small)),
        f"gss_M1{len(training)}_M2{M2}": gss(model, training, M2=M2, N=min(N_max, M2)),
    }

    dims = np.arange(1, N_max + 1)
    mean_cols, max_cols, labels = [], [], []
    for label, rb in bases.items():
        usable = [int(N) for N in dims if N <= rb.dimension]
        table = nested_projection_errors(test, rb, usable, relative=True)
        means = np.array([table[N][0] if N in table else np.nan for N in dims])
        maxes = np.array([table[N][1] if N in table else np.nan for N in dims])
        mean_cols.append(means)
        max_cols.append(maxes)
        labels.append(label)

    store.emit("mean_errors.csv", [dims.astype(float)] + mean_cols, ["N"] + labels)
    store.emit("max_errors.csv", [dims.astype(float)] + max_cols, ["N"] + labels)
    rows_n, rows_label, rows_mean, rows_max = [], [], [], []
    for label, means, maxes in zip(labels, mean_cols, max_cols):
        for i, N in enumerate(dims):
            if np.isfinite(means[i]):
                rows_n.append(float(N))
                rows_label.append(label)
                rows_mean.append(means[i])
                rows_max.append(maxes[i])
    with open(store.path("error_curves.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("N,method,mean,max\n")
        for N, label, mean, mx in zip(rows_n, rows_label, rows_mean, rows_max):
            fh.write(f"{int(N)},{label},{mean:.17g},{mx:.17g}\n")
    store.write_manifest()
    return store


def run_toy_quadratic(config, out_dir):
    """Toy snapshots plus homogeneous/full quadratic reconstructions."""
    from .basis import SnapshotMatrix

    store = _store(config, out_dir)
    toy_cfg = config["toy"]
    cfg, S = build_toy_quadratic(
        count=int(toy_cfg.get("count", 41)),
        mu_max=float(toy_cfg.get("mu_max", 1.0)),
        c1=float(toy_cfg.get("c1", 1.0)),
        c2=float(toy_cfg.get("c2", 0.5)),
        beta_sign=int(toy_cfg.get("beta_sign", 1)),
    )
    snaps = SnapshotMatrix(S, np.c_[cfg.grid])
    store.emit("toy_data_points.dat", [S[0], S[1]], ["first", "second"])
    for kind, name in (("homogeneous_quadratic", "toy_quadratic_homogeneous.dat"),
                       ("full_quadratic", "toy_quadratic_full.dat")):
        manifold = qsvdm_train(snaps, 1, kind)
        rec = quad_reconstruct(manifold, snapshot=S)
        store.emit(name, [rec[0], rec[1]], ["first", "second"])
    store.write_manifest()
    return store


def run_quadratic(config, out_dir, method=None):
    """Reconstruction-error curves of linear/homogeneous/full variants vs n."""
    store = _store(config, out_dir)
    model = _build_model(config)
    quad_cfg = config["quadratic"]
    method = method or quad_cfg.get("method", "qsvdm")
    centered = bool(quad_cfg.get("centered", True))
    n_values = quad_cfg.get("n_values")
    if n_values is None:
        n_values = list(range(1, int(quad_cfg.get("n", 6)) + 1))
    pool = int(quad_cfg.get("r", 2 * max(n_values)))

    training = _training_parameters(model, config)
    snaps = build_snapshots(model, training)
    test_params = _training_parameters(model, config, name="test", size_key="test_size")
    test = build_snapshots(model, test_params)
    data = snaps.centered() if centered else snaps
    shift = data.centered_mean if centered else np.zeros(model.dof_count)
    test_cols = test.columns

    linear_err, hom_err, full_err, qsvdm_err = [], [], [], []
    last_manifold = None
    for n in n_values:
        base = pod(data, model.metric, n)
        centered_test = test_cols - shift[:, None]
        proj = base.basis.project(centered_test) + shift[:, None]
        scale = model.metric.column_norms(test_cols)
        linear_err.append(float(np.mean(
            model.metric.column_norms(test_cols - proj) / np.where(scale > 0, scale, 1))))
        for kind, out in (("homogeneous_quadratic", hom_err), ("full_quadratic", full_err)):
            if method == "qsvdm":
                manifold = qsvdm_train(snaps, n, kind, centered=centered,
                                       metric=model.metric)
            else:
                manifold = qgm_train(snaps, n, min(pool, snaps.count), kind,
                                     centered=centered, metric=model.metric)
            out.append(float(np.mean(reconstruction_errors(manifold, test))))
            if kind == quad_cfg.get("map", "full_quadratic"):
                last_manifold = manifold
        if method == "qgm":
            baseline = qsvdm_train(snaps, n, "homogeneous_quadratic",
                                   centered=centered, metric=model.metric)
            qsvdm_err.append(float(np.mean(reconstruction_errors(baseline, test))))
    if last_manifold is not None:
        save_model(store.path("quad_manifold.mork"), "quad_manifold",
                   {"method": method, "map": last_manifold.feature_map.kind,
                    "n": last_manifold.n, "centered": centered},
                   {"V": last_manifold.V.columns, "W": last_manifold.W,
                    "shift": last_manifold.shift[None, :]})
    columns = [np.asarray(n_values, float), linear_err]
    header = ["n", "linear"]
    if method == "qgm":  # keep the POD-anchored baseline next to the greedy one
        columns.append(qsvdm_err)
        header.append("qsvdm")
    columns += [hom_err, full_err]
    header += ["homogeneous", "full"]
    store.emit("quadratic_errors.csv", columns, header)
    store.write_manifest()
    return store


def run_ncrba_train(config, out_dir):
    store = _store(config, out_dir)
    model = _build_model(config)
    ncrba_cfg = config["ncrba"]
    N = int(ncrba_cfg.get("N", 20))
    n = int(ncrba_cfg.get("n", int(config["model"]["p"]) + 1))
    training = _training_parameters(model, config)
    snaps = build_snapshots(model, training)
    V = pod(snaps, model.metric, N)

    sampling = config["sampling"]
    dataset_rng = substream(sampling["seed"], "ncrba-dataset")
    dataset_params = model.domain.sample_uniform(
        dataset_rng, int(ncrba_cfg.get("dataset_size", 10000)))
    coeffs = coefficient_dataset(model, V, dataset_params,
                                 source=ncrba_cfg.get("dataset_source", "galerkin"))
    regressor = ncrba_cfg.get("regressor", "polynomial")
    params = {"degree": int(ncrba_cfg.get("degree", 4)),
              "k": int(ncrba_cfg.get("knn", 5))}
    nm = ncrba_train(coeffs, V, n=n, N=N, regressor_spec=regressor,
                     rng=substream(sampling["seed"], "ncrba-split"), **params)

    save_model(store.path("ncrba_model.mork"), "ncrba",
               {"n": n, "N": N, "regressor": regressor, **params},
               _ncrba_matrices(nm))
    mae = nm.training_report.holdout_mae
    store.emit("regression_report.csv",
               [np.arange(n + 1, N + 1, dtype=float), mae],
               ["coefficient", "holdout_mae"])
    store.write_manifest()
    return store


def _ncrba_matrices(nm):
    matrices = {"basis": nm.basis.basis.columns}
    reg = nm.psi_hat
    if hasattr(reg, "weights") and reg.weights is not None:
        matrices["weights"] = reg.weights
        matrices["input_center"] = reg._center[None, :]
        matrices["input_halfwidth"] = reg._halfwidth[None, :]
    if hasattr(reg, "_targets") and reg._targets is not None:
        matrices["knn_inputs"] = reg._tree.data.T
        matrices["knn_targets"] = reg._targets
    return matrices


def load_ncrba_model(path, model):
    """Rebuild a trained compressive model against a freshly assembled metric."""
    from .basis import ReducedBasis
    from .features import FeatureMap
    from .ncrba import NcrbaModel
    from .numerics import SubspaceBasis
    from .regression import NearestNeighborRegressor, PolynomialRegressor

    kind, meta, matrices = load_model(path)
    if kind != "ncrba":
        raise ConfigError(f"{path} holds a {kind!r} container, expected ncrba")
    basis = ReducedBasis(SubspaceBasis(matrices["basis"], model.metric),
                         construction="pod")
    if meta["regressor"] == "polynomial":
        reg = PolynomialRegressor(degree=int(meta["degree"]))
        reg.feature_map = FeatureMap("polynomial", int(meta["n"]),
                                     degree=int(meta["degree"]))
        reg.weights = matrices["weights"]
        reg._center = matrices["input_center"][0]
        reg._halfwidth = matrices["input_halfwidth"][0]
    else:
        reg = NearestNeighborRegressor(k=int(meta["k"]))
        reg.fit(matrices["knn_inputs"], matrices["knn_targets"])
    return NcrbaModel(basis=basis, n=int(meta["n"]), psi_hat=reg)


def load_quad_manifold(path, metric):
    """Rebuild a stored quadratic manifold against a freshly assembled metric."""
    from .features import FeatureMap
    from .numerics import SubspaceBasis
    from .quadratic import QuadManifold

    kind, meta, matrices = load_model(path)
    if kind != "quad_manifold":
        raise ConfigError(f"{path} holds a {kind!r} container, expected quad_manifold")
    return QuadManifold(
        V=SubspaceBasis(matrices["V"], metric),
        W=matrices["W"],
        feature_map=FeatureMap(meta["map"], int(meta["n"])),
        shift=matrices["shift"][0],
    )


def run_ncrba_solve(config, out_dir):
    store = _store(config, out_dir)
    model = _build_model(config)
    ncrba_cfg = config["ncrba"]
    model_path = ncrba_cfg.get("model_path")
    if model_path is None:
        raise ConfigError("missing [ncrba].model_path for ncrba-solve")
    nm = load_ncrba_model(model_path, model)
    mu = np.asarray(ncrba_cfg.get("solve_mu", model.reference_parameter), dtype=float)
    alpha, trace = ncrba_online_solve(
        nm, model, mu,
        tol=float(ncrba_cfg.get("tol", 1e-10)),
        max_iter=int(ncrba_cfg.get("max_iter", 20000)))
    full = ncrba_decode(nm, alpha)
    store.emit("online_coefficients.dat",
               [np.arange(1, len(full) + 1, dtype=float), full],
               ["k", "alpha"])
    store.emit("online_residual_trace.dat",
               [np.arange(1, trace.iterations + 1, dtype=float),
                trace.residual_norms],
               ["iteration", "residual"])
    store.write_manifest()
    return store


def _chart_for(config, model, p=None):
    manifold_cfg = config.get("manifold", {})
    q = int(p if p is not None else config["model"]["p"])
    count = int(manifold_cfg.get("directions", 0)) or default_direction_count(q)
    seed = config["sampling"]["seed"]
    symmetric = bool(manifold_cfg.get("symmetric", False))
    # q=1 generic draws must not be near-symmetric, or the O(r) law hides
    # behind the O(r^2) special case over a finite radius window
    min_skew = 0.2 if q == 1 else 0.0
    P = sample_directions(q, count, rng=substream(seed, f"directions-q{q}"),
                          symmetric=symmetric, min_skew=min_skew)
    return LocalChart(model=model, mu_star=fin_reference(q), directions=P)


def _radii_from(config):
    manifold_cfg = config.get("manifold", {})
    return default_radii(
        count=int(manifold_cfg.get("radii_count", 11)),
        largest=2.0 ** -float(manifold_cfg.get("radii_max_exp", 2)),
        smallest=2.0 ** -float(manifold_cfg.get("radii_min_exp", 12)),
    )


def run_taylor_convergence(config, out_dir):
    """Tangent and curvature convergence series with slope summaries."""
    store = _store(config, out_dir)
    model = _build_model(config)
    chart = _chart_for(config, model)
    radii = _radii_from(config)
    decay_order = 2 if bool(config.get("manifold", {}).get("symmetric", False)) else 1
    p = chart.q

    summary = []
    tangent = tangent_convergence_experiment(chart, radii, decay_order=decay_order)
    store.emit(f"tangent_convergence_p{p}.dat", [tangent.radii, tangent.values],
               ["r", "sin_theta"])
    store.emit(f"tangent_alignment_p{p}.dat",
               [tangent.radii, tangent.aux["procrustes_residual"]],
               ["r", "alignment_residual"])
    summary.append(("tangent", p, tangent))

    gap = singular_value_gap_series(chart, radii)
    store.emit(f"singular_gap_p{p}.dat", [gap.radii, gap.values], ["r", "gap_ratio"])

    curvature_radii = radii[radii**4 >= 1e-16]
    if len(curvature_radii) >= 3:
        for filtered in (True, False):
            series = curvature_convergence_experiment(chart, curvature_radii,
                                                      filtered=filtered)
            tag = "filtered" if filtered else "unfiltered"
            store.emit(f"curvature_{tag}_p{p}.dat", [series.radii, series.values],
                       ["r", "sin_theta"])
            summary.append((f"curvature_{tag}", p, series))

    with open(store.path("slopes.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("experiment,p,slope,r2,points_used\n")
        for name, pp, series in summary:
            fh.write(f"{name},{pp},{series.fitted_slope:.17g},"
                     f"{series.r_squared:.17g},{series.points_used}\n")
    store.write_manifest()
    return store


def run_quad_law(config, out_dir):
    """Quadratic-law residual decay plus the feature-ablation comparison."""
    store = _store(config, out_dir)
    model = _build_model(config)
    chart = _chart_for(config, model)
    radii = _radii_from(config)
    radii = radii[radii**4 >= 1e-16]
    p = chart.q

    hom = quadratic_law_fit(chart, radii, filtered=True,
                            feature_kind="homogeneous_quadratic")
    full = quadratic_law_fit(chart, radii, filtered=True,
                             feature_kind="full_quadratic")
    unf_hom = quadratic_law_fit(chart, radii, filtered=False,
                                feature_kind="homogeneous_quadratic")
    unf_full = quadratic_law_fit(chart, radii, filtered=False,
                                 feature_kind="full_quadratic")
    store.emit(f"quadratic_law_p{p}.dat",
               [hom.radii, hom.values, full.values, unf_hom.values, unf_full.values],
               ["r", "filtered_homogeneous", "filtered_full",
                "unfiltered_homogeneous", "unfiltered_full"])
    with open(store.path("slopes.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("experiment,p,slope,r2,points_used\n")
        for name, series in (("quad_law_filtered_hom", hom),
                             ("quad_law_filtered_full", full),
                             ("quad_law_unfiltered_hom", unf_hom),
                             ("quad_law_unfiltered_full", unf_full)):
            fh.write(f"{name},{p},{series.fitted_slope:.17g},"
                     f"{series.r_squared:.17g},{series.points_used}\n")
    store.write_manifest()
    return store
