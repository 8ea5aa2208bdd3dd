"""Radiology report labels to chest X-ray image labels.

Library and CLI for converting 4-class report labels (and report text via
a distilled probabilistic student) into binary image labels, with the
agreement statistics, baselines, calibration mappings, and significance
analyses needed to evaluate the conversion, plus a synthetic corpus
generator for verification.
"""

from .labels import (
    CONDITIONS,
    CONDITION_INDEX,
    FEATURE_NAMES,
    NO_FINDING,
    Corpus,
    ReportLabel,
    Study,
    UncertaintyPolicy,
    binarize,
    binarize_corpus,
    decode_one_hot,
    encode_one_hot,
    join_corpora,
    one_hot_matrix,
)
from .metrics import (
    AgreementBounds,
    BootstrapResult,
    ConfusionCounts,
    DisagreementCounts,
    MetricsReport,
    agreement_bounds,
    bootstrap_paired_average_f1_diff,
    bootstrap_paired_f1_diff,
    cohens_kappa,
    confusion_counts,
    disagreement_counts,
    f1_score,
    macro_average,
    select_evaluation_conditions,
    weighted_average,
)
from .glm import (
    ClassWeighting,
    FitReport,
    LogisticModel,
    OddsRatioEntry,
    OddsRatioTable,
    Penalty,
    ThresholdSet,
    apply_thresholds,
    fit_logistic,
    loocv_binary_predictions,
    odds_ratio_table,
    predict_proba,
    youden_threshold,
    youden_thresholds,
)
from .distill import (
    StudentModel,
    TrainConfig,
    Vocabulary,
    predict_student,
    tokenize,
    train_student,
)
from .synthetic import ConditionProfile, SyntheticSpec, generate_synthetic_corpus

__version__ = "0.1.0"
