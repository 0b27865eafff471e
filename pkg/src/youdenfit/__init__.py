"""Linear combination of biomarkers by Youden index maximization.

Fits a scalar diagnostic score as a linear combination of biomarker panels:
stage one estimates combination weights by maximizing a kernel-smoothed
empirical AUC, stage two picks the cutoff maximizing the empirical Youden
index.  Also provides score-method confidence intervals for the fitted
index, corrections for panels labeled by an imperfect reference test, and
seeded generators plus a CLI harness for Monte-Carlo studies.
"""

from .core import (
    BiomarkerPanel,
    CombinationWeights,
    CutoffPolicy,
    DegenerateNormalizationError,
    LabelKind,
    NumericError,
    ScoreSplit,
    ValidationError,
    YoudenFit,
    normalize_weights,
    project_scores,
)
from .auc import (
    Bandwidth,
    default_bandwidth,
    empirical_auc,
    smoothed_auc,
    smoothed_auc_gradient,
)
from .optimize import (
    ConvergenceWarning,
    OptimizerConfig,
    estimate_weights,
    estimate_weights_sim,
)
from .youden import (
    CutoffCandidates,
    candidate_cutoffs,
    estimate_cutoff,
    evaluate_fit,
    fit_two_stage,
    youden_at,
)
from .inference import (
    IntervalEstimate,
    ac_adjusted_proportions,
    normal_quantile,
    variance_bounds,
    wilson_interval,
    youden_interval,
    youden_interval_np,
)
from .imperfect import (
    IllConditionedReferenceError,
    ImperfectFit,
    ReferenceQuality,
    fit_two_stage_imperfect,
    proxy_auc,
    proxy_youden,
    reference_quality_from_error_rates,
    true_auc_from_proxy,
    true_youden_from_proxy,
)
from .simgen import (
    DEFAULT_BINARY_RATES,
    DEFAULT_GRADED_MEANS,
    BinaryLogisticDesign,
    MvnEqualCovDesign,
    MvnIdentityDesign,
    MvnUnequalCovDesign,
    PopulationTruth,
    ScenarioSpec,
    calibrated_intercept,
    corrupt_reference,
    default_binary_design,
    generate,
    mu_for_target_youden,
    population_truth,
)

__version__ = "0.1.0"

__all__ = [
    "BiomarkerPanel",
    "CombinationWeights",
    "CutoffPolicy",
    "DegenerateNormalizationError",
    "LabelKind",
    "NumericError",
    "ScoreSplit",
    "ValidationError",
    "YoudenFit",
    "normalize_weights",
    "project_scores",
    "Bandwidth",
    "default_bandwidth",
    "empirical_auc",
    "smoothed_auc",
    "smoothed_auc_gradient",
    "ConvergenceWarning",
    "OptimizerConfig",
    "estimate_weights",
    "estimate_weights_sim",
    "CutoffCandidates",
    "candidate_cutoffs",
    "estimate_cutoff",
    "evaluate_fit",
    "fit_two_stage",
    "youden_at",
    "IntervalEstimate",
    "ac_adjusted_proportions",
    "normal_quantile",
    "variance_bounds",
    "wilson_interval",
    "youden_interval",
    "youden_interval_np",
    "IllConditionedReferenceError",
    "ImperfectFit",
    "ReferenceQuality",
    "fit_two_stage_imperfect",
    "proxy_auc",
    "proxy_youden",
    "reference_quality_from_error_rates",
    "true_auc_from_proxy",
    "true_youden_from_proxy",
    "BinaryLogisticDesign",
    "DEFAULT_BINARY_RATES",
    "DEFAULT_GRADED_MEANS",
    "MvnEqualCovDesign",
    "MvnIdentityDesign",
    "MvnUnequalCovDesign",
    "PopulationTruth",
    "ScenarioSpec",
    "calibrated_intercept",
    "corrupt_reference",
    "default_binary_design",
    "generate",
    "mu_for_target_youden",
    "population_truth",
    "__version__",
]
