"""1-Lipschitz feed-forward classifiers with certificates and exact oracles.

Building blocks: spectral-norm/orthogonality projection (linalg), constrained
nets with hand-written gradients (net), the margin/temperature loss family
(losses), certificates and the L2 attack (robustness), exact signed-distance
and optimal-transport ground truth (geometry, transport), and the training
loop plus experiment drivers (train, experiments). The lipnets CLI exposes all
of it; see README.md.
"""

from ._kernels import BACKEND, using_compiled
from .errors import *  # noqa: F401,F403
from .linalg import SpectralEstimate, bjorck_orthogonalize, orthogonality_residual, power_iteration
from .losses import LossSpec, bce_tau, cce_tau, hinge_m, hkr, multiclass_hkr, small_tau_limit_check, wass_loss
from .net import (
    CONSTRAINED,
    ORTHOGONAL,
    SPECTRAL_NORM,
    UNCONSTRAINED,
    DenseLayer,
    GradientBundle,
    GroupSortLayer,
    LipNet,
    ReluLayer,
    backward,
    build_mlp,
    forward,
    groupsort2,
    input_gradient_norm,
    lipschitz_upper_bound,
    load_checkpoint,
    project,
    save_checkpoint,
)
from .robustness import (
    AttackResult,
    Certificate,
    balance_bias,
    binary_certificate,
    evaluation_report,
    mcr,
    mmcr,
    multiclass_certificate,
    pgd_l2,
    robust_accuracy,
)
from .geometry import (
    MulticlassRegions,
    PolylineBoundary,
    RegionLabeler,
    koch_snowflake,
    multiclass_sdf,
    nearest_boundary_point,
    sdf_grid_dataset,
    signed_distance,
    snowflake_bbox,
)
from .transport import (
    DiscreteDist,
    best_threshold_accuracy,
    kr_dual_estimate,
    packing_bounds,
    pathological_diracs,
    w1_exact_1d,
    w1_exact_assignment,
)
from .train import (
    LabeledDataset,
    OptimizerCfg,
    TrainHistory,
    gaussian_mixture_task,
    linear_pair_task,
    random_label_task,
    separable_blobs_task,
    train,
    two_moons_task,
)
from .experiments import (
    consistency_experiment,
    divergence_experiment,
    pareto_sweep,
    sdf_fit_experiment,
)

__version__ = "0.1.0"
