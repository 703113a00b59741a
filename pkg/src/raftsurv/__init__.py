"""Parametric survival models on the age time scale with residualized covariates.

Four modelling paradigms are provided: an AFT model with age as a covariate on
the time-in-study scale (``aft-ac``), an AFT model on the age scale without
covariate adjustment for age (``aft-na``), and the residual AFT and residual PH
models (``raft``, ``rph``) that regress age-varying covariates on age first and
use the residuals in a left-truncated age-scale model.
"""

__version__ = "0.1.0"

from .coherence import (
    WILSON_PROFILE,
    ClaimReport,
    CoherenceReport,
    WilsonModel,
    calibrate_wilson_shape,
    check_inequalities,
    claim_scan,
    rescale_time,
)
from .dist import DistributionFamily, ParamSet
from .evaluate import BrierConfig, BrierReport, brier_score, run_evaluation
from .exceptions import (
    CohortFormatError,
    ConfigError,
    DegenerateConditioningError,
    DegenerateDataError,
    DomainError,
    IdentifiabilityError,
    InsufficientDataError,
    RaftSurvError,
    UnsupportedConfigurationError,
)
from .paradigms import Cohort, Paradigm, Subject, SurvivalParadigm, TrainedModel, predict_event_prob, train
from .residualize import AgeResidualizer, ResidualModel, apply_stage1, fit_stage1
from .simdata import GeneratorConfig, generate_cohort, read_cohort, write_cohort
from .survreg import FitResult, ModelForm, ParametricSurvivalRegressor, SurvivalData
from .survreg import fit as fit_survival

__all__ = [
    "__version__",
    "AgeResidualizer",
    "BrierConfig",
    "BrierReport",
    "ClaimReport",
    "Cohort",
    "CohortFormatError",
    "CoherenceReport",
    "ConfigError",
    "DegenerateConditioningError",
    "DegenerateDataError",
    "DistributionFamily",
    "DomainError",
    "FitResult",
    "GeneratorConfig",
    "IdentifiabilityError",
    "InsufficientDataError",
    "ModelForm",
    "Paradigm",
    "ParamSet",
    "ParametricSurvivalRegressor",
    "RaftSurvError",
    "ResidualModel",
    "Subject",
    "SurvivalData",
    "SurvivalParadigm",
    "TrainedModel",
    "UnsupportedConfigurationError",
    "WILSON_PROFILE",
    "WilsonModel",
    "apply_stage1",
    "brier_score",
    "calibrate_wilson_shape",
    "check_inequalities",
    "claim_scan",
    "fit_stage1",
    "fit_survival",
    "generate_cohort",
    "predict_event_prob",
    "read_cohort",
    "rescale_time",
    "run_evaluation",
    "train",
    "write_cohort",
]
