"""Multiple membership multilevel models.

Gaussian mixed models in which lower-level units belong to several clusters
of each classification with weights summing to one. Provides weight-scheme
construction, data simulation, a conjugate Gibbs sampler, an exact
small-scale marginal-likelihood/ML fitter, replication experiments, and a
CSV-based CLI.
"""

from .core import (
    Classification,
    Dataset,
    MembershipDesign,
    ModelSpec,
    Parameters,
    Violation,
    collapse_to_single_membership,
    linear_predictor,
    normalize_weights,
    validate_design,
    weighted_cluster_covariate,
)
from .diagnostics import effective_sample_size, mcse_mean, split_rhat
from .errors import (
    ConvergenceError,
    DataError,
    DimensionError,
    DivergenceError,
    InfeasibleCardinalityError,
    IngestError,
    InvalidDistanceError,
    InvalidWeightsError,
    IsolatedAreaError,
    MmlmError,
    ModelError,
    NotPositiveDefiniteError,
    NumericError,
    SingularDesignError,
)
from .exact import MarginalModel, MLFit, fit_ml, gradient_check, log_likelihood, log_likelihood_gradient
from .experiments import (
    BiasReport,
    RecoveryReport,
    SensitivityReport,
    bias_experiment,
    parameter_recovery,
    sensitivity_experiment,
)
from .gibbs import (
    ChainConfig,
    FitResult,
    GibbsModel,
    GibbsState,
    ParameterSummary,
    PriorConfig,
    full_conditional_beta,
    full_conditional_u,
    full_conditional_variances,
    initial_state,
    run_gibbs,
    variance_partition,
    weighted_variance_partition,
)
from .simulate import (
    ClassificationConfig,
    SimConfig,
    SimResult,
    simulate,
    simulate_design,
    simulate_designs,
    simulate_response,
)
from .weights import (
    AdjacencyList,
    reweight_scheme,
    weights_from_adjacency,
    weights_from_exposure,
    weights_from_probabilities,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyList",
    "BiasReport",
    "ChainConfig",
    "Classification",
    "ClassificationConfig",
    "ConvergenceError",
    "DataError",
    "Dataset",
    "DimensionError",
    "DivergenceError",
    "FitResult",
    "GibbsModel",
    "GibbsState",
    "InfeasibleCardinalityError",
    "IngestError",
    "InvalidDistanceError",
    "InvalidWeightsError",
    "IsolatedAreaError",
    "MLFit",
    "MarginalModel",
    "MembershipDesign",
    "MmlmError",
    "ModelError",
    "ModelSpec",
    "NotPositiveDefiniteError",
    "NumericError",
    "ParameterSummary",
    "Parameters",
    "PriorConfig",
    "RecoveryReport",
    "SensitivityReport",
    "SimConfig",
    "SimResult",
    "SingularDesignError",
    "Violation",
    "bias_experiment",
    "collapse_to_single_membership",
    "effective_sample_size",
    "fit_ml",
    "full_conditional_beta",
    "full_conditional_u",
    "full_conditional_variances",
    "gradient_check",
    "initial_state",
    "linear_predictor",
    "log_likelihood",
    "log_likelihood_gradient",
    "mcse_mean",
    "normalize_weights",
    "parameter_recovery",
    "reweight_scheme",
    "run_gibbs",
    "sensitivity_experiment",
    "simulate",
    "simulate_design",
    "simulate_designs",
    "simulate_response",
    "split_rhat",
    "validate_design",
    "variance_partition",
    "weighted_cluster_covariate",
    "weighted_variance_partition",
    "weights_from_adjacency",
    "weights_from_exposure",
    "weights_from_probabilities",
]
