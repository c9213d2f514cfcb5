from screening_thresholds.data_io import (
    config_from_yaml,
    read_sample,
    report_from_json,
    report_to_csv,
    report_to_json,
)
from screening_thresholds.design import (
    build_lp,
    c_opt_star,
    predicted_power,
    solve_minority_greedy,
    solve_simplex,
    verify_theorem1,
)
from screening_thresholds.errors import (
    AdmissibilityError,
    DegenerateScaleError,
    InfeasibleError,
    IngestError,
    InsufficientDataError,
    InvariantViolationError,
    ParameterError,
    ResamplingError,
    ScreeningError,
    UnknownClassError,
)
from screening_thresholds.estimation import (
    EmpiricalDistribution,
    cusum_sample,
    cusum_transform,
    dichotomize_top_quantile,
    empirical_quantile,
    estimate_optimal_design,
    estimate_rule,
    relative_frequencies,
    standardize,
)
from screening_thresholds.evaluation import (
    alarm_summary,
    apply_thresholds,
    contingency,
    evaluate,
    standardized_alarms,
)
from screening_thresholds.models import (
    AlternativeSpec,
    BootstrapReport,
    ClassDistribution,
    ConstantRule,
    EstimatedRule,
    EvaluationReport,
    GammaRule,
    LabeledSample,
    LpInstance,
    ModifiedRule,
    OptimalDesignReport,
    OptimalRule,
    ProportionalRule,
    Report,
    RunConfig,
    ScreeningSimReport,
    StandardizationModel,
    SubprobabilityRule,
    SubProbabilityVector,
    ThresholdSet,
)
from screening_thresholds.resampling import bootstrap_thresholds, smoothed_screening_sim
from screening_thresholds.rules import (
    AdmissibilityDiagnostic,
    check_admissibility,
    constant_thresholds,
    false_alarm_rate,
    fuse_minority,
    gamma_proportional_thresholds,
    modified_thresholds,
    proportional_thresholds,
    thresholds_from_subprobability,
)

__all__ = [
    "AdmissibilityDiagnostic",
    "AdmissibilityError",
    "AlternativeSpec",
    "BootstrapReport",
    "ClassDistribution",
    "ConstantRule",
    "DegenerateScaleError",
    "EmpiricalDistribution",
    "EstimatedRule",
    "EvaluationReport",
    "GammaRule",
    "InfeasibleError",
    "IngestError",
    "InsufficientDataError",
    "InvariantViolationError",
    "LabeledSample",
    "LpInstance",
    "ModifiedRule",
    "OptimalDesignReport",
    "OptimalRule",
    "ParameterError",
    "ProportionalRule",
    "Report",
    "ResamplingError",
    "RunConfig",
    "ScreeningError",
    "ScreeningSimReport",
    "StandardizationModel",
    "SubProbabilityVector",
    "SubprobabilityRule",
    "ThresholdSet",
    "UnknownClassError",
    "alarm_summary",
    "apply_thresholds",
    "bootstrap_thresholds",
    "build_lp",
    "c_opt_star",
    "check_admissibility",
    "config_from_yaml",
    "constant_thresholds",
    "contingency",
    "cusum_sample",
    "cusum_transform",
    "dichotomize_top_quantile",
    "empirical_quantile",
    "estimate_optimal_design",
    "estimate_rule",
    "evaluate",
    "false_alarm_rate",
    "fuse_minority",
    "gamma_proportional_thresholds",
    "modified_thresholds",
    "predicted_power",
    "proportional_thresholds",
    "read_sample",
    "relative_frequencies",
    "report_from_json",
    "report_to_csv",
    "report_to_json",
    "smoothed_screening_sim",
    "solve_minority_greedy",
    "solve_simplex",
    "standardize",
    "standardized_alarms",
    "thresholds_from_subprobability",
    "verify_theorem1",
]
