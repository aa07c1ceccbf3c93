"""Regression for metric-space-valued responses.

Distribution-valued (quantile grid, Wasserstein) and SPD-matrix-valued
(Frobenius or Cholesky-factor metric) responses regressed on Euclidean
covariates, with linear, nonlinear (profile-estimated), and separable
generalized-linear weight families, plus a reproducible simulation and
benchmarking harness.
"""

from .errors import (
    BadData,
    BadObjective,
    ConfigError,
    DataError,
    DegenerateSigma,
    DimensionError,
    EmptyInput,
    FitFailed,
    IllPosedObjective,
    InfeasibleSpec,
    MetricRegError,
    NotPositiveDefinite,
    NotSymmetric,
    SpecMismatch,
    ValidationError,
)
from .estimators import (
    BetaSearchSpace,
    Dataset,
    FitDiagnostics,
    FittedModel,
    MomentEstimates,
    estimate_moments,
    estimate_object_moments,
    estimate_sigma_h,
    fit_lfr,
    fit_nlfr_profile,
    fit_snlfr,
    frechet_mean,
    predict,
    predict_by_weights,
    predict_many,
)
from .evaluate import ExperimentResult, ase_beta, mse_m, mse_y, run_experiment
from .kernel import (
    MinimizeResult,
    OptimizerOptions,
    brent_min,
    cholesky_factor,
    isotonic_regression,
    nelder_mead,
    spd_inverse_ridge,
    sym_eig_clip,
)
from .simgen import (
    SimulationSpec,
    TrueRegression,
    derive_links,
    derive_separable_links,
    g_eval,
    gen_Pm,
    gen_covariates,
    make_dataset,
    sample_response,
    sample_responses,
    true_regression,
)
from .spaces import (
    SPD_CHOLESKY,
    SPD_FROBENIUS,
    WASSERSTEIN,
    QuantileFunction,
    RawObject,
    SpaceSpec,
    SPDMatrix,
    combine,
    distance,
    grid_points,
    project,
    weighted_frechet_mean,
)
from .weights import (
    LinkSpec,
    LinearFlavor,
    NonlinearFlavor,
    SeparableFlavor,
    generalized_linear_links,
    lfr_reducing_links,
    linear_weight,
    nonlinear_weight,
)

__version__ = "0.1.0"
