"""Entropy-based Bayesian optimization for very noisy evaluations on a finite grid."""

from .exceptions import (
    ConditioningError,
    IagoError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidSpecificationError,
)
from .gp_core import (
    CandidateGrid,
    CovarianceSpec,
    GPPosterior,
    HyperparameterBounds,
    NoiseModel,
    Observation,
    ObservationSet,
    compute_posterior,
    cov_matrix,
    fantasy_update,
    fit_hyperparameters,
    fuse_batch,
    log_marginal_likelihood,
)
from .minimizer_entropy import (
    MinimizerDistribution,
    PathSet,
    entropy_of_posterior,
    minimizer_histogram,
    sample_paths,
    shannon_entropy,
)
from .optimizer import (
    IAGO,
    IID,
    OptimizerConfig,
    RunAborted,
    RunTrace,
    Standardization,
    estimate_optimum,
    initial_design,
    run,
)
from .sur_criterion import (
    INF,
    CriterionProfile,
    QuadratureRule,
    criterion_profile,
    criterion_value,
    gauss_hermite,
    iid_select,
    select_next,
)
from .testbed import NoisyObjective, evaluate_batch, make_gp_draw_objective, make_res_surrogate, true_optimum

__version__ = "0.1.0"
