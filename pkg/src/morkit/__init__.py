"""Model-order-reduction toolkit.

Linear reduced bases (POD, certified weak greedy, greedy-sampled SVD),
quadratic-manifold and compressive nonlinear reductions, and local
Taylor-subspace diagnostics, exercised on a parametrized 2-D thermal-fin
finite-element benchmark through a reproducible experiment CLI.
"""

__version__ = "0.1.0"

from .basis import (ReducedBasis, SnapshotMatrix, build_snapshots,
                    coercivity_lower_bound, estimator_eval, estimator_offline,
                    gss, pod, projection_error, weak_greedy)
from .features import FeatureMap, feature_eval, vecsym
from .fin import (HighFidelityModel, build_thermal_fin, solve_high_fidelity,
                  solve_second_sensitivity, solve_sensitivity)
from .manifold import (LocalChart, coefficient_map,
                       curvature_convergence_experiment, curvature_reference,
                       jacobian_condition_check, loglog_slope_fit,
                       quadratic_law_fit, sample_directions, scaled_snapshots,
                       tangent_convergence_experiment, tangent_reference)
from .ncrba import NcrbaModel, ncrba_decode, ncrba_online_solve, ncrba_train
from .numerics import (AlignmentResult, InnerProduct, PrincipalAngles,
                       SubspaceBasis, cholesky_spd, correlation_eig,
                       gram_schmidt, principal_angles, procrustes_align,
                       subspace_gap, weighted_svd)
from .parameters import ParameterDomain, fin_domain, fin_reference
from .quadratic import QuadManifold, qgm_train, qsvdm_train, quad_reconstruct
from .storage import emit_plot_data, load_matrix, save_matrix
from .toy import ToySnapshotConfig, build_toy_quadratic
