"""Mixture proportion and density ratio estimation for positive-unlabeled data.

The log density ratio of positives to negatives is modeled as an intercept
plus a sum of centered spline components; estimation is by penalized EM on a
profile empirical likelihood.
"""
from .em import Classification, EmConfig, FitResult, classify, e_step, em_fit, em_fit_single, shift_constant
from .exceptions import (
    DataError,
    DomainError,
    EstimationError,
    GenerationError,
    InferenceError,
    MaskingError,
    NonConvergenceError,
    NumericError,
    ParameterError,
    PuTiltError,
)
from .gam import AdditiveFit, effective_df, fit_additive_logistic, fit_linear_logistic
from .inference import BootstrapResult, ComponentTest, bootstrap_ci_pi, fourier_project, test_component
from .model import (
    Bounds,
    GaetParams,
    LinearParams,
    PuDataset,
    check_bounds,
    density_ratio,
    eta,
    lambda_tilde,
    posterior,
    profile_loglik,
)
from .simulation import (
    MaskSpec,
    Metrics,
    SimSetting,
    StudyReport,
    bayes_oracle,
    evaluate,
    generate_pu,
    m_function,
    mask_labeled,
    run_study,
)
from .splines import BasisSpec, centering_weights, eval_basis, make_spec, penalty_matrix

__version__ = "0.1.0"
