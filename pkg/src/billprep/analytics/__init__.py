"""Churn feature vectors, correlations, and from-scratch classifiers."""

from billprep.analytics.evaluation import (
    EvalMetrics,
    MajorityClassifier,
    cross_validate,
    stratified_folds,
    undersample_majority,
)
from billprep.analytics.features import (
    FEATURE_NAMES,
    EncodingTable,
    FeatureColumns,
    FeatureVector,
    build_feature_vectors,
    encode_categorical,
    feature_columns,
    feature_matrix,
    label_churn,
)
from billprep.analytics.forest import ForestParams, RandomForest, train_random_forest
from billprep.analytics.logistic import (
    ConvergenceError,
    LogisticParams,
    LogisticRegression,
    loss_and_gradient,
    train_logistic_regression,
)
from billprep.analytics.stats import UndefinedCorrelationError, correlation_report, pearson

__all__ = [
    "FEATURE_NAMES",
    "ConvergenceError",
    "EncodingTable",
    "EvalMetrics",
    "FeatureColumns",
    "FeatureVector",
    "ForestParams",
    "LogisticParams",
    "LogisticRegression",
    "MajorityClassifier",
    "RandomForest",
    "UndefinedCorrelationError",
    "build_feature_vectors",
    "correlation_report",
    "cross_validate",
    "encode_categorical",
    "feature_columns",
    "feature_matrix",
    "label_churn",
    "loss_and_gradient",
    "pearson",
    "stratified_folds",
    "train_logistic_regression",
    "train_random_forest",
    "undersample_majority",
]
