"""Bayesian nonparametric latent feature modeling of mixed-type tabular data.

Binary latent features with an unbounded-capacity prior explain every
attribute of a table through per-type observation maps over Gaussian
pseudo-observations; inference is a semi-collapsed Gibbs sampler whose
sweeps are linear in the number of objects and attributes.  The fitted
model supports data exploration (per-pattern attribute distributions
against the empirical baseline) and missing-data imputation.
"""

from .dataset import (
    AttributeType,
    ColumnSummary,
    HeterogeneousDataset,
    Hyperparameters,
    LatentMatrix,
    Violation,
    categorical,
    column_summary,
    count,
    make_dataset,
    ordinal,
    positive_real,
    real,
    validate,
)
from .transforms import (
    PseudoInterval,
    TransformSpec,
    fit_transform,
    forward,
    forward_categorical,
    inverse_interval,
    observation_logdensity,
)
from .ibp import IbpDraw, expected_features, inclusion_prob, sample_ibp
from .sampler import (
    FitResult,
    ImputationResult,
    RetainedSample,
    SamplerState,
    collapsed_log_evidence,
    collapsed_loglik_delta,
    impute,
    init,
    propose_new_features,
    resample_alpha,
    resample_pseudo,
    resample_thresholds,
    resample_weights,
    run,
    sweep_z,
)
from .explore import (
    DistributionTable,
    EffectsReport,
    Pattern,
    build_report,
    empirical_baseline,
    list_patterns,
    pattern_distribution,
)

__version__ = "0.1.0"
