"""spurgap: how adversarial perturbations shift the distribution robustness
of linear classifiers trained on Gaussian data with spurious correlations.

The package pairs closed-form theory (optimal-coefficient fixed points and
erf accuracy formulas) with empirical pipelines (two-stage proxy and
per-epoch adversarial training) and a Monte Carlo oracle that cross-checks
every closed form.
"""

__version__ = "0.1.0"

from .population import (
    ALIGNED,
    MISALIGNED,
    AttributeSpec,
    GroupKey,
    LabeledSample,
    PopulationSpec,
    SampleBatch,
    alignment_groups,
    sample,
    two_attribute_population,
)
from .perturbation import (
    PerturbationDirection,
    ThreatModel,
    apply_perturbation,
    fgsm_features,
    fgsm_perturb,
    optimal_direction,
    scale_budget,
    sign_pm1,
)
from .theory import (
    CleanOptimalCoefficient,
    FixedPointError,
    FixedPointResult,
    PerturbedOptimalCoefficient,
    SolverOptions,
    TheoreticalGap,
    alignment_terms,
    balanced_test_accuracy,
    clean_optimal,
    clean_optimal_classifier,
    coefficient_training_accuracy,
    group_accuracy_clean,
    group_accuracy_perturbed,
    log_odds,
    perturbed_optimal,
    perturbed_optimal_classifier,
    phi,
    solve_c,
    solve_tau,
    theoretical_gap,
    train_accuracy_clean,
    train_accuracy_perturbed,
)
from .estimators import (
    AdversarialTrainingClassifier,
    LinearLogisticClassifier,
    TwoStageProxyClassifier,
    adversarial_train,
    evaluate,
    fit_logistic,
    two_stage_proxy,
)
from .montecarlo import MCEstimate, agreement_report, mc_accuracy, mc_group_accuracy
from .sweep import (
    ConfigError,
    ExperimentPoint,
    GapGrid,
    Pipeline,
    PointResult,
    default_config,
    load_config,
    run_point,
    run_sweep,
    stable_seed,
)
from .validation import SuiteReport, run_agreement_suite

__all__ = [
    "__version__",
    # population
    "ALIGNED", "MISALIGNED", "AttributeSpec", "GroupKey", "LabeledSample",
    "PopulationSpec", "SampleBatch", "alignment_groups", "sample",
    "two_attribute_population",
    # perturbation
    "PerturbationDirection", "ThreatModel", "apply_perturbation",
    "fgsm_features", "fgsm_perturb", "optimal_direction", "scale_budget",
    "sign_pm1",
    # theory
    "CleanOptimalCoefficient", "FixedPointError", "FixedPointResult",
    "PerturbedOptimalCoefficient", "SolverOptions", "TheoreticalGap",
    "alignment_terms", "balanced_test_accuracy", "clean_optimal",
    "clean_optimal_classifier", "coefficient_training_accuracy",
    "group_accuracy_clean", "group_accuracy_perturbed", "log_odds",
    "perturbed_optimal", "perturbed_optimal_classifier", "phi", "solve_c",
    "solve_tau", "theoretical_gap", "train_accuracy_clean",
    "train_accuracy_perturbed",
    # estimators
    "AdversarialTrainingClassifier", "LinearLogisticClassifier",
    "TwoStageProxyClassifier", "adversarial_train", "evaluate",
    "fit_logistic", "two_stage_proxy",
    # monte carlo
    "MCEstimate", "agreement_report", "mc_accuracy", "mc_group_accuracy",
    # sweeps
    "ConfigError", "ExperimentPoint", "GapGrid", "Pipeline", "PointResult",
    "default_config", "load_config", "run_point", "run_sweep", "stable_seed",
    # validation
    "SuiteReport", "run_agreement_suite",
]
