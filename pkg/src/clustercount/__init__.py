"""Markov counting process models for clustered binary outcomes."""

from .core import (
    ClusterObservation,
    DomainError,
    RateFamily,
    RateModelSpec,
    RateSchedule,
    rate_vector,
    validate_observation,
)
from .exchangeable import (
    LambdaVector,
    lambda_beta_binomial,
    lambda_binomial,
    lambda_from_transition,
    lambda_qpower,
    pmf_from_lambda,
)
from .fit import (
    FitResult,
    RegressionFit,
    fit_mle,
    fit_regression_combined,
    goodness_of_fit,
    log_likelihood,
    relative_risk,
)
from .simulate import RegressionSpec, simulate_cluster, simulate_count, simulate_dataset
from .transition import (
    TransitionDistribution,
    log_transition,
    transition_closed_form,
    transition_distribution,
    transition_matrix,
)

__version__ = "0.1.0"
