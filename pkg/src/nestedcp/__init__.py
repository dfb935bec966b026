"""Nested and localized conformal prediction sets for multi-class classifiers."""

__version__ = "0.1.0"

from .conformal import (
    CalibrationModel,
    ConformityScores,
    PredictionSet,
    calibrate,
    conformity_scores,
    labeled_scores,
    naive_set,
    oracle_threshold,
    predict_set,
    predict_sets,
    score_labeled,
)
from .core import ClassDistribution, ClassLabel, LabelSpace, ValidationError, rank_distribution
from .localized import LocalizedCalibration, localized_calibrate, localized_predict, set_size_report
from .metrics import (
    ConfusionTable,
    build_confusion,
    classification_error,
    empirical_cost_ratio,
    empirical_coverage,
    forecasting_error,
    nonconformity_histogram,
)
from .models import CostWeights, ProbabilityTable, SoftmaxModel, load_probability_table, predict_proba, train_softmax
from .synthetic import GeneratorSpec, generate, split
