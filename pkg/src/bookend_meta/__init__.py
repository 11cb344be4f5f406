"""Bayesian two-arm meta-analysis of odds ratios with exact
non-collapsibility arithmetic, the bookend mixture model, and practitioner
diagnostics."""

__version__ = "0.1.0"

from .core import (
    ArmData,
    AttenuationReport,
    DataError,
    Dataset,
    DegenerateStudyError,
    PooledEstimate,
    ScenarioParams,
    Treatment,
    exact_mixture_or,
    inverse_logit,
    inverse_variance_pool,
    logit,
    naive_average_log_or,
    observed_log_or,
    study_estimates,
)
from .dataio import emit, ingest
from .mcmc import (
    ChainSet,
    ParameterSpace,
    ParameterSummary,
    PosteriorSummary,
    SamplerConfig,
    sample,
    summarize,
)
from .models import (
    FitResult,
    ModelKind,
    ModelSpec,
    fit,
    log_post_bookend,
    log_post_standard_fe,
    log_post_standard_re,
    log_post_standard_re_noncentered,
)
from .simulation import (
    POP1,
    POP2,
    Population,
    SimDesign,
    StudyPlan,
    SweepCell,
    arm_probabilities,
    bias_sweep,
    mixture,
    simulate,
    three_study_design,
)
from .workflow import (
    DiagnosticsReport,
    assess_baseline_spread,
    identify_bookends,
    sensitivity_compare,
    sensitivity_compare_detailed,
)

__all__ = [
    "__version__",
    "ArmData",
    "AttenuationReport",
    "ChainSet",
    "DataError",
    "Dataset",
    "DegenerateStudyError",
    "DiagnosticsReport",
    "FitResult",
    "ModelKind",
    "ModelSpec",
    "POP1",
    "POP2",
    "ParameterSpace",
    "ParameterSummary",
    "PooledEstimate",
    "Population",
    "PosteriorSummary",
    "SamplerConfig",
    "ScenarioParams",
    "SimDesign",
    "StudyPlan",
    "SweepCell",
    "Treatment",
    "arm_probabilities",
    "assess_baseline_spread",
    "bias_sweep",
    "emit",
    "exact_mixture_or",
    "fit",
    "identify_bookends",
    "ingest",
    "inverse_logit",
    "inverse_variance_pool",
    "log_post_bookend",
    "log_post_standard_fe",
    "log_post_standard_re",
    "log_post_standard_re_noncentered",
    "logit",
    "mixture",
    "naive_average_log_or",
    "observed_log_or",
    "sample",
    "sensitivity_compare",
    "sensitivity_compare_detailed",
    "simulate",
    "study_estimates",
    "summarize",
    "three_study_design",
]
