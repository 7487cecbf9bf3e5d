"""Correlation-assisted missing-data (CAM) estimation.

Improves complete-case estimators (U-statistics, kernel densities,
local-constant regressions) by a weighted mean-zero adjustment built from
observations with missing features, with data-driven weights, confidence
intervals, and a Monte Carlo lab for verifying the variance reduction.
"""

from .core import CamComponents, GammaSolution, MseGeometry, combine, mse_difference, optimal_gamma
from .dataset import (
    AdjustmentSet,
    CamError,
    CamWarning,
    IngestError,
    MaskedDataset,
    Pattern,
    PatternCompatibilityError,
    PatternGroups,
    ProjectedSample,
    group_by_pattern,
    ingest_csv,
    project,
    select_adjustment_set,
)
from .kde import (
    CamDensityResult,
    KernelConstants,
    SmootherSpec,
    cam_density_at,
    cam_density_grid,
    kde_point,
    kernel_constants,
    marginal_kernel,
    rule_of_thumb_bandwidth,
    tv_distance,
)
from .locreg import (
    CamRegressionResult,
    LocalWeights,
    NoLocalDataError,
    cam_regress_at,
    cam_regress_batch,
    local_variance,
    local_weights,
    loccon_point,
    loocv_bandwidth,
    mise,
)
from .resample import BalancedAdjustment, balanced_adjustment
from .simlab import (
    ExperimentReport,
    ModelSpec,
    UStatConfig,
    generate,
    oracle_phi1_example1,
    predictive_mse,
    run_density_experiment,
    run_regression_experiment,
    run_toy_experiment,
    run_ustat_experiment,
    toy_closed_form,
)
from .ustat import (
    CamUStatResult,
    UGeometryEstimate,
    UKernelSpec,
    UStatEstimate,
    adjustment_pair,
    builtin_kernels,
    cam_ustat,
    cc_ustat,
    covariance_kernel,
    estimate_geometry,
    eval_ustat,
    function_kernel,
    linear_adjustment,
    mean_kernel,
    response_mean_kernel,
    response_squared_difference_kernel,
)

__version__ = "0.1.0"
